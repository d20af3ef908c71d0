"""Lattice density vs heat kernel: squared gap over a ladder of h.

Reports the raw gaps, the fitted decay exponent and the slope of the gap
divided by h^(exponent - eps) for each (H, H*) and t. A scaled slope near 0
means the stated exponent is sharp on this ladder.
"""
import argparse

import numpy as np

from pamfk.analysis import density_gap, estimate_order
from pamfk.noise import ModelParams

CASES = [(0.5, 0.5), (0.5, 0.75), (0.75, 0.75)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--lmax", type=int, default=4, help="finest level is 4^-lmax")
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--t", type=float, nargs="+", default=[0.25, 1.0, 4.0])
    args = ap.parse_args()
    hs = [4.0 ** -l for l in range(1, args.lmax + 1)]
    print(f"h = {hs}")
    for H, Hs in CASES:
        stated = 0.5 if Hs == 0.5 else min(2 * H + Hs - 1, 1.0)
        for t in args.t:
            gaps = [density_gap(t, ModelParams(H, Hs, h)) for h in hs]
            raw = estimate_order(zip(hs, gaps))[0]
            scaled = estimate_order(zip(hs, [g / h ** (stated - args.eps) for h, g in zip(hs, gaps)]))[0]
            print(f"H={H} H*={Hs} t={t:<5} gaps {np.array2string(np.array(gaps), precision=3)}  "
                  f"decay {raw:.3f}  stated {stated:.2f}  scaled slope {scaled:+.3f}")


if __name__ == "__main__":
    main()

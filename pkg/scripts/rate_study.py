"""Self-convergence rates of u_h for flat and delta initial data.

Prints err2 per level, the fitted slope and the local slope between
neighbouring levels, for white time (exact two-walk transfer matrix) and
optionally a Monte Carlo run with colored time.

    python3 scripts/rate_study.py --levels 5 --csv rates.csv
"""
import argparse

import numpy as np

from pamfk.analysis import rate_study
from pamfk.cli import write_csv
from pamfk.noise import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--levels", type=int, default=4, help="ladder length including the reference")
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--hstar", type=float, nargs="+", default=[0.5, 0.75])
    ap.add_argument("--colored-mc", action="store_true", help="also run H=H*=0.75 by Monte Carlo")
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    rows = []
    for ic in ("flat", "delta"):
        for hs in args.hstar:
            rep = rate_study(ic, ModelParams(0.5, hs, 1.0), args.levels, t=args.t)
            hs_arr = np.array([lv.h for lv in rep.levels])
            e2 = np.array([lv.err2 for lv in rep.levels])
            local = np.diff(np.log(e2)) / np.diff(np.log(hs_arr))
            print(f"{ic:5s} H*={hs:<5} slope {rep.slope:.4f} (theory {rep.theory_slope:.2f})  "
                  f"local {np.round(local, 3).tolist()}")
            for lv in rep.levels:
                rows.append((ic, 0.5, hs, lv.h, lv.err2, lv.method, lv.se, rep.slope, rep.theory_slope))
    if args.colored_mc:
        rep = rate_study("flat", ModelParams(0.75, 0.75, 0.25), 0, t=args.t, levels=[0.25, 1 / 16],
                         reference_h=1 / 64, method="montecarlo", paths=args.paths)
        print(f"flat  H=H*=0.75 MC slope {rep.slope:.3f} +/- {rep.slope_se:.3f}")
        for lv in rep.levels:
            rows.append(("flat", 0.75, 0.75, lv.h, lv.err2, lv.method, lv.se, rep.slope, rep.theory_slope))
    if args.csv:
        write_csv((["ic", "H", "Hstar", "h", "err2", "method", "se", "slope", "theory_slope"], rows), args.csv)


if __name__ == "__main__":
    main()

"""Closed-form noise covariance against direct quadrature, plus an empirical check."""
import argparse
import itertools

import numpy as np

from pamfk.noise import ModelParams, quadrature_oracle, sample_values, wh_covariance, window_covariance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--span", type=int, default=8)
    ap.add_argument("--seeds", type=int, default=20_000)
    args = ap.parse_args()
    for H, Hs, h in itertools.product((0.6, 0.75, 0.9), (0.6, 0.75, 0.9), (1.0, 0.25)):
        p = ModelParams(H, Hs, h)
        worst = max(abs(quadrature_oracle(dm, dn, p, 1e-9) - wh_covariance(dm, dn, p))
                    for dm in range(-args.span, args.span + 1) for dn in range(-args.span, args.span + 1))
        print(f"H={H} H*={Hs} h={h:<5} max |closed - quad| = {worst:.2e}")
    p = ModelParams(0.75, 0.75, 0.25)
    vals = sample_values(p, 3, -1, 1, range(args.seeds)).reshape(args.seeds, -1)
    emp = np.cov(vals, rowvar=False)
    exact = window_covariance(p, 3, -1, 1)
    print(f"empirical window covariance, {args.seeds} seeds: max abs error {np.max(np.abs(emp - exact)):.2e}")


if __name__ == "__main__":
    main()

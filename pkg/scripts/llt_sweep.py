"""m * sup_n |G(m, n) - 2 p_m(n)| over a range of m."""
import argparse

import numpy as np

from pamfk.analysis import llt_errors


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m-max", type=int, default=4096)
    args = ap.parse_args()
    ms = np.arange(2, args.m_max + 1)
    scaled = ms * llt_errors(ms)
    for m in (2, 3, 4, 8, 16, 64, 256, 1024, args.m_max):
        if m <= args.m_max:
            print(f"m={m:5d}  m*err={scaled[m - 2]:.6f}")
    print(f"max over [2, {args.m_max}]: {scaled.max():.6f} at m={ms[scaled.argmax()]}")
    print(f"tail mean of m*err over the last 100 m: {scaled[-100:].mean():.6f}")


if __name__ == "__main__":
    main()

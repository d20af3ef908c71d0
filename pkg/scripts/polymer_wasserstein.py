"""W2 distance between free partition functions at m and 4m."""
import argparse

from pamfk.cli import bootstrap_w2
from pamfk.noise import ModelParams
from pamfk.polymer import partition_samples


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=float, default=0.5)
    ap.add_argument("--hstar", type=float, default=0.5)
    ap.add_argument("--m", type=int, nargs="+", default=[4, 16, 64])
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--bootstrap", type=int, default=200)
    ap.add_argument("--variant", choices=["free", "bridge"], default="free")
    args = ap.parse_args()
    p = ModelParams(args.H, args.hstar)
    need = sorted(set(args.m) | {4 * m for m in args.m})
    z = {m: partition_samples(m, p, args.variant, range(m * 10**6, m * 10**6 + args.samples)) for m in need}
    for m in args.m:
        w, se = bootstrap_w2(z[m], z[4 * m], args.bootstrap, m)
        print(f"W2(Z_{m}, Z_{4 * m}) = {w:.4f} +/- {se:.4f}   mean Z_{m} = {z[m].mean():.4f}")


if __name__ == "__main__":
    main()

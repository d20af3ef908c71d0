"""Compute and freeze the constants and oracle values used by the test suite.

Writes tests/fixtures/constants.json. Bound constants are the largest
observed ratio over a fixed, seeded set of sample points (with degenerate
configurations added by hand). Oracle values come from methods that do not
share code with the package: spectral quadrature and brute-force
quadrature in real space.
"""
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import integrate

from pamfk.chaos import KernelSpec, f_norm2, heat_norm2, hstar_inner, lattice_density, spectral_constant
from pamfk.noise import ModelParams
from pamfk.walk import lattice_floor, srw_pmf, tau

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "constants.json"
HSTARS = (0.5, 0.6, 0.75, 0.9)


def time_samples(k, seed=2024, n=24):
    rng = np.random.default_rng(seed + k)
    out = [np.sort(rng.uniform(0, 1, k) ** rng.choice([1.0, 3.0])) for _ in range(n)]
    # clustered and boundary-hugging configurations
    for eps in (1e-3, 1e-2):
        out.append(np.linspace(eps, k * eps, k))
        out.append(1 - np.linspace(k * eps, eps, k))
        out.append(np.sort(np.concatenate([[0.5], 0.5 + eps * np.arange(1, k)])))
    return [s for s in out if len(np.unique(s)) == k and s[0] > 0 and s[-1] < 1]


def f_ratio(ic, k, s, K):
    spec = KernelSpec(ic, k, 1.0, 0.0, ModelParams(0.5, K, 0.25))
    gaps = np.diff(np.concatenate([[0.0], s, [1.0]]))
    g = gaps[1:] if ic == "flat" else gaps
    return f_norm2(spec, s) / float(np.prod(g ** (K - 1)))


def f_norm_constants(kmax=3):
    out = {}
    for ic in ("flat", "delta"):
        for K in HSTARS:
            per_k = {}
            for k in range(1, kmax + 1):
                per_k[str(k)] = max(f_ratio(ic, k, s, K) for s in time_samples(k))
            C = max(v ** (1.0 / int(k)) for k, v in per_k.items())
            out[f"{ic}:{K}"] = {"C": C, "ratio_max": per_k}
    return out


def heat_constants():
    ts = np.geomspace(1e-3, 10, 41)
    return {str(K): max(heat_norm2(t, K) * t ** (1 - K) for t in ts) for K in HSTARS}


def lattice_constants():
    out = {}
    for K in HSTARS:
        for h in (0.25, 1 / 16):
            p = ModelParams(0.5, K, h)
            # the norm is constant for t in [m h, (m + 1) h), so the supremum
            # over t in [h, 10] is approached at the right end of each step
            best = 0.0
            for m in range(1, lattice_floor(10, h) + 1):
                d = lattice_density(m, 0, p)
                best = max(best, hstar_inner(d, d, p) * min((m + 1) * h, 10.0) ** (1 - K))
            out[f"{K}:{h}"] = best
    return out


# -- oracles -----------------------------------------------------------------


def heat_norm_bruteforce(t, K):
    """K(2K-1) int int p_t(y) p_t(z) |y - z|^(2K-2) in the variables u = y - z, v = y + z."""
    def inner(u):
        # int p_t(y) p_t(y - u) dy = p_{2t}(u)
        return math.exp(-u * u / (4 * t)) / math.sqrt(4 * math.pi * t)
    val, _ = integrate.quad(lambda u: inner(u) * u ** (2 * K - 2), 0, np.inf, epsabs=1e-13, limit=200)
    return 2 * K * (2 * K - 1) * val


def diff_norm_k1_spectral(ic, t, x, s, K, h):
    """||f_1(s,.) - g_{h,1}(s,.)||^2 with Gaussian terms done in Fourier space."""
    p = ModelParams(0.5, K, h)
    dx = p.space_step
    mt = lattice_floor(t, h)
    ls = lattice_floor(s, h)
    gap = mt - ls
    cx = lattice_floor(x, dx)
    c = spectral_constant(K)
    beta = 1 - 2 * K
    # flat: f(y) = p_{t-s}(x - y), g(y) = G(gap, 2(cx - floor(y)) - tau(gap)) / dx
    # delta: both get the extra factor from time 0 to s; evaluated at y only through the product
    if ic != "flat":
        raise ValueError("spectral oracle is for the flat kernel")
    tau_ = t - s
    edges, weights = [], []
    cells = range(cx - gap - 2, cx + gap + 3)
    for cy in cells:
        weights.append(srw_pmf(gap, 2 * (cx - cy) + tau(mt - mt) - tau(mt - ls)) / dx)
        edges.append(cy * dx)
    edges.append((cells[-1] + 1) * dx)
    w = np.array([0.0] + weights + [0.0])
    d = np.diff(w)  # jump at each edge
    e = np.array(edges)
    ff = 2 * c * integrate.quad(lambda xi: math.exp(-tau_ * xi * xi) * xi ** beta, 0, np.inf, epsabs=1e-14)[0]
    fg = 0.0
    for de, ee in zip(d, e):
        if de == 0.0:
            continue
        def integrand(xi, ee=ee):
            return math.exp(-tau_ * xi * xi / 2) * xi ** (beta - 1) * math.sin(xi * (ee - x))
        fg += -de * 2 * c * integrate.quad(integrand, 0, np.inf, epsabs=1e-14, limit=400)[0]
    # cell-cell block directly from the length form of the Gram matrix
    L = e[:, None] - e[None, :]
    gram_edges = -0.5 * np.abs(L) ** (2 * K)
    gg = float(d @ gram_edges @ d)
    return ff - 2 * fg + gg


def diff_norm_k2_white_bruteforce(s1, s2, t, x, h):
    """Flat k=2 at H* = 1/2: L2 norm over R^2 by cellwise quadrature."""
    p = ModelParams(0.5, 0.5, h)
    dx = p.space_step
    mt = lattice_floor(t, h)
    l1, l2 = lattice_floor(s1, h), lattice_floor(s2, h)
    cx = lattice_floor(x, dx)
    a, b = s2 - s1, t - s2

    def f(y1, y2):
        return (math.exp(-(y2 - y1) ** 2 / (2 * a)) / math.sqrt(2 * math.pi * a)
                * math.exp(-(x - y2) ** 2 / (2 * b)) / math.sqrt(2 * math.pi * b))

    def g(c1, c2):
        j1 = 2 * (c2 - c1) + tau(mt - l2) - tau(mt - l1)
        j2 = 2 * (cx - c2) + tau(0) - tau(mt - l2)
        return srw_pmf(l2 - l1, j1) * srw_pmf(mt - l2, j2) / dx ** 2

    ff = 1 / math.sqrt(4 * math.pi * a) / math.sqrt(4 * math.pi * b)
    span = mt + 3
    fg = gg = 0.0
    for c2 in range(cx - span, cx + span + 1):
        for c1 in range(c2 - span, c2 + span + 1):
            gv = g(c1, c2)
            if gv == 0.0:
                continue
            gg += gv * gv * dx * dx
            val, _ = integrate.dblquad(lambda y1, y2: f(y1, y2), c2 * dx, (c2 + 1) * dx,
                                       c1 * dx, (c1 + 1) * dx, epsabs=1e-13, epsrel=1e-12)
            fg += gv * val
    return ff - 2 * fg + gg


def chain_k3_montecarlo(w, alpha, n=4_000_000, seed=7):
    """Importance sampling of the k=3 chain integral with Gaussian proposals."""
    rng = np.random.default_rng(seed)
    w = np.asarray(w)
    sd = 1 / np.sqrt(2 * w)
    e = rng.standard_normal((n, 3)) * sd
    norm = np.prod(np.sqrt(np.pi / w))
    prev = np.concatenate([np.zeros((n, 1)), e[:, :-1]], axis=1)
    vals = norm * np.prod(np.abs(e - prev) ** alpha, axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def oracles():
    out = {"heat_norm_bruteforce": {}}
    for K in (0.6, 0.75, 0.9):
        out["heat_norm_bruteforce"][str(K)] = heat_norm_bruteforce(1.0, K)
    cases = []
    for K in (0.6, 0.75):
        for h in (0.25, 1 / 16):
            for s in (0.3, 0.55):
                cases.append({"K": K, "h": h, "s": s, "t": 1.0, "x": 0.2,
                              "value": diff_norm_k1_spectral("flat", 1.0, 0.2, s, K, h)})
    out["diff_k1_spectral"] = cases
    cases = []
    for h in (0.25, 1 / 16):
        for s1, s2 in ((0.3, 0.6), (0.1, 0.8)):
            cases.append({"h": h, "s": [s1, s2], "t": 1.0, "x": 0.0,
                          "value": diff_norm_k2_white_bruteforce(s1, s2, 1.0, 0.0, h)})
    out["diff_k2_white"] = cases
    w, alpha = (1.0, 0.5, 0.7), -0.2
    mean, se = chain_k3_montecarlo(w, alpha)
    out["chain_k3"] = {"w": list(w), "alpha": alpha, "mean": mean, "se": se}
    return out


def main():
    data = {
        "heat_norm": heat_constants(),
        "lattice_density": lattice_constants(),
        "f_norm": f_norm_constants(),
        "oracles": oracles(),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    json.dump(data["oracles"], sys.stdout, indent=1)


if __name__ == "__main__":
    main()

"""Heat kernel, chaos kernels ``f_k`` / ``g_{h,k}`` and their Hilbert norms.

Space inner products are taken in the Hurst-``Hstar`` space, i.e.

    <f, g> = Hstar (2 Hstar - 1) \\int\\int f(y) g(z) |y - z|^(2 Hstar - 2) dy dz
           = c_H \\int fhat(xi) conj(ghat(xi)) |xi|^(1 - 2 Hstar) dxi

with ``c_H = Gamma(2 Hstar + 1) sin(pi Hstar) / (2 pi)``, which reduces to the
L2 inner product at ``Hstar = 1/2``. Heat-kernel and cell-indicator factors
have closed forms in terms of confluent hypergeometric functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import CapacityError, ValidationError
from .noise import ModelParams, _interval_inner, gamma_corr
from .walk import lattice_floor, lattice_indices, srw_pmf, tau

__all__ = [
    "KernelSpec",
    "Heat",
    "Cells",
    "heat_kernel",
    "f_kernel",
    "g_kernel",
    "lattice_density",
    "spectral_constant",
    "hstar_inner",
    "heat_norm2",
    "chain_integral",
    "f_norm2",
    "kernel_diff_norm",
    "chaos_levels",
    "chaos_second_moment",
    "MAX_K",
]

MAX_K = 6
MAX_DIFF_K = 3


@dataclass(frozen=True)
class KernelSpec:
    ic: str
    k: int
    t: float
    x: float
    params: ModelParams

    def __post_init__(self):
        if self.ic not in ("flat", "delta"):
            raise ValidationError(f"ic must be 'flat' or 'delta', got {self.ic!r}")
        if not 1 <= self.k <= MAX_K:
            raise ValidationError(f"k={self.k} outside [1, {MAX_K}]")
        if not self.t > 0:
            raise ValidationError("t must be positive")


@dataclass(frozen=True)
class Heat:
    """The function ``y -> p_t(x - y)``."""

    t: float
    x: float = 0.0


@dataclass(frozen=True)
class Cells:
    """Step function ``sum_j weights[j] * 1[(c0 + j) dx, (c0 + j + 1) dx)``."""

    dx: float
    c0: int
    weights: tuple

    @property
    def edges(self) -> np.ndarray:
        return (self.c0 + np.arange(len(self.weights) + 1)) * self.dx


def heat_kernel(t, x):
    """Gaussian density ``p_t(x)``; vectorised, rejects ``t <= 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValidationError("heat kernel needs t > 0")
    out = np.exp(-np.square(x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return float(out) if out.ndim == 0 else out


def _sorted_points(s, y, t):
    s, y = np.asarray(s, dtype=float), np.asarray(y, dtype=float)
    if s.shape != y.shape or s.ndim != 1 or len(s) == 0:
        raise ValidationError("s and y must be non-empty 1-d sequences of equal length")
    order = np.argsort(s, kind="stable")
    return s[order], y[order]


def f_kernel(spec: KernelSpec, s: Sequence[float], y: Sequence[float]) -> float:
    """Continuum chaos kernel at one point ``(s, y)``."""
    if len(s) != spec.k:
        raise ValidationError(f"expected {spec.k} time points, got {len(s)}")
    ss, yy = _sorted_points(s, y, spec.t)
    if ss[0] <= 0 or ss[-1] >= spec.t:
        raise ValidationError("time points must lie in (0, t)")
    times = np.concatenate([[0.0], ss, [spec.t]])
    space = np.concatenate([[0.0], yy, [spec.x]])
    gaps = np.diff(times)
    if np.any(gaps <= 0):
        raise ValidationError("coincident time points")
    first = 0 if spec.ic == "delta" else 1
    return float(np.prod(heat_kernel(gaps[first:], np.diff(space)[first:])))


def g_kernel(spec: KernelSpec, s: Sequence[float], y: Sequence[float]) -> float:
    """Lattice chaos kernel, piecewise constant on (slab x cell) boxes."""
    if len(s) != spec.k:
        raise ValidationError(f"expected {spec.k} time points, got {len(s)}")
    p = spec.params
    mt = lattice_floor(spec.t, p.h)
    if min(s) < 0 or max(s) >= mt * p.h:
        raise ValidationError("time points must lie in [0, floor(t/h) h)")
    kp = lattice_indices(spec.t, spec.x, s, y, p)
    first = 0 if spec.ic == "delta" else 1
    val = 1.0
    for gap, jump in zip(kp.s_frak[first:], kp.y_frak[first:]):
        val *= srw_pmf(gap, jump)
    return val / p.space_step ** (spec.k + 1 - first)


def lattice_density(m: int, n: int, params: ModelParams, sign: int = -1) -> Cells:
    """``y -> G(m, 2(n - floor(y / dx)) + sign * tau(m)) / dx`` as a step function."""
    if sign not in (-1, 1):
        raise ValidationError("sign must be +1 or -1")
    dx = params.space_step
    c_lo, c_hi = n - (m + 1) // 2 - 1, n + (m + 1) // 2 + 1
    w = tuple(srw_pmf(m, 2 * (n - c) + sign * tau(m)) / dx for c in range(c_lo, c_hi + 1))
    return Cells(dx, c_lo, w)


# ---------------------------------------------------------------------------
# inner products in the Hurst-Hstar space


def spectral_constant(K: float) -> float:
    return math.gamma(2 * K + 1) * math.sin(math.pi * K) / (2 * math.pi)


def _heat_heat(f: Heat, g: Heat, K: float) -> float:
    if K == 0.5:
        return heat_kernel(f.t + g.t, f.x - g.x)
    a = 1.0 - K  # (alpha + 1) / 2 with alpha = 1 - 2K
    A = 0.5 * (f.t + g.t)
    b = f.x - g.x
    return float(spectral_constant(K) * math.gamma(a) * A ** -a * special.hyp1f1(a, 0.5, -b * b / (4 * A)))


def heat_norm2(t: float, K: float) -> float:
    """``||p_t||^2`` in the Hurst-``K`` space."""
    return spectral_constant(K) * math.gamma(1 - K) * t ** (K - 1)


def _signed_power_mean(mu, sigma, K):
    """``E[sgn(Z) |Z|^(2K-1)]`` for ``Z ~ N(mu, sigma^2)`` (vectorised in ``mu``)."""
    nu = 2.0 * K
    mu = np.asarray(mu, dtype=float)
    return (sigma ** (nu - 2) * mu * 2 ** (nu / 2) * math.gamma((nu + 1) / 2) / math.sqrt(math.pi)
            * special.hyp1f1(1 - nu / 2, 1.5, -mu * mu / (2 * sigma * sigma)))


def _heat_cells(f: Heat, g: Cells, K: float) -> float:
    edges = g.edges
    sd = math.sqrt(f.t)
    if K == 0.5:
        cdf = special.ndtr((edges - f.x) / sd)
        mass = cdf[1:] - cdf[:-1]
    else:
        # <p_t(x - .), 1_[a,b]> = E psi(Y), psi the potential of the indicator
        m = K * _signed_power_mean(f.x - edges, sd, K)
        mass = m[:-1] - m[1:]
    return float(np.dot(mass, g.weights))


def _cells_cells(f: Cells, g: Cells, K: float) -> float:
    ea, eb = f.edges, g.edges
    gram = _interval_inner(ea[:-1, None], ea[1:, None], eb[None, :-1], eb[None, 1:], K)
    return float(np.asarray(f.weights) @ gram @ np.asarray(g.weights))


def hstar_inner(f, g, params: ModelParams | float) -> float:
    """Inner product of two handles (``Heat`` or ``Cells``) in the space Hurst space."""
    K = params.Hstar if isinstance(params, ModelParams) else float(params)
    if isinstance(f, Cells) and isinstance(g, Heat):
        f, g = g, f
    if isinstance(f, Heat) and isinstance(g, Heat):
        return _heat_heat(f, g, K)
    if isinstance(f, Heat) and isinstance(g, Cells):
        return _heat_cells(f, g, K)
    if isinstance(f, Cells) and isinstance(g, Cells):
        return _cells_cells(f, g, K)
    raise ValidationError(f"unsupported handle types {type(f).__name__}, {type(g).__name__}")


def _psi(y, a, b, K):
    """Potential ``y -> <delta_y, 1_[a,b]>``; the indicator itself when ``K = 1/2``."""
    y = np.asarray(y, dtype=float)
    if K == 0.5:
        return ((y >= a) & (y < b)).astype(float)
    beta = 2 * K - 1
    return K * (np.sign(y - a) * np.abs(y - a) ** beta - np.sign(y - b) * np.abs(y - b) ** beta)


# ---------------------------------------------------------------------------
# ||f_k(s, .)||^2 through the Fourier chain


def _shifted_power_gauss(w, b, alpha):
    """``int |u - b|^alpha exp(-w u^2) du`` (vectorised in ``b``)."""
    a = 0.5 * (alpha + 1)
    return math.gamma(a) * w ** -a * special.hyp1f1(-0.5 * alpha, 0.5, -w * np.square(b))


def _power_substituted(func, alpha, tol):
    """``int_R |u|^alpha func(u) du`` for even ``func``, via ``u = v^(1/(1+alpha))``."""
    beta = alpha + 1.0
    val, err = integrate.quad(lambda v: func(v ** (1.0 / beta)), 0.0, np.inf, epsabs=tol, epsrel=tol, limit=400)
    return 2.0 * val / beta


def chain_integral(w: Sequence[float], alpha: float, tol: float = 1e-11) -> float:
    """``int prod_j |e_j - e_{j-1}|^alpha prod_i exp(-w_i e_i^2) de`` over R^k, ``e_0 = 0``.

    Closed form for ``k = 1`` (and for every ``k`` when ``alpha = 0``),
    a 1-d integral for ``k = 2`` and a nested 2-d integral for ``k = 3``.
    """
    w = [float(v) for v in w]
    k = len(w)
    if alpha == 0.0:
        return float(np.prod([math.sqrt(math.pi / v) for v in w]))
    a = 0.5 * (alpha + 1)
    if k == 1:
        return math.gamma(a) * w[0] ** -a
    if k == 2:
        return _power_substituted(lambda u: math.exp(-w[0] * u * u) * _shifted_power_gauss(w[1], u, alpha), alpha, tol)
    if k == 3:
        def inner(e2):
            # int |e1|^alpha |e2 - e1|^alpha exp(-w1 e1^2) de1, singular at 0 and e2
            lo, hi = sorted((0.0, e2))
            g = lambda e1: math.exp(-w[0] * e1 * e1)
            total = 0.0
            if hi > lo:
                val, _ = integrate.quad(g, lo, hi, weight="alg", wvar=(alpha, alpha), epsabs=tol, epsrel=tol, limit=200)
                total += val
            beta = alpha + 1.0
            for end, other, sgn in ((hi, lo, 1.0), (lo, hi, -1.0)):
                # tail beyond ``end``: substitute |e1 - end| = v^(1/beta)
                def tail(v, end=end, other=other, sgn=sgn):
                    d = v ** (1.0 / beta)
                    e1 = end + sgn * d
                    return abs(e1 - other) ** alpha * math.exp(-w[0] * e1 * e1)
                val, _ = integrate.quad(tail, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=200)
                total += val / beta
            return total

        def outer(e2):
            return math.exp(-w[1] * e2 * e2) * inner(e2) * _shifted_power_gauss(w[2], e2, alpha)

        parts = [integrate.quad(outer, lo, hi, epsabs=tol, epsrel=tol, limit=200)[0]
                 for lo, hi in ((-np.inf, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, np.inf))]
        return float(sum(parts))
    raise CapacityError(f"chain integral implemented for k <= {MAX_DIFF_K}")


def f_norm2(spec: KernelSpec, s: Sequence[float]) -> float:
    """``||f_k(s, .)||^2`` in the k-fold tensor power of the space Hurst space."""
    K = spec.params.Hstar
    alpha = 1.0 - 2.0 * K
    t, x = spec.t, spec.x
    ss = np.sort(np.asarray(s, dtype=float))
    if ss[0] <= 0 or ss[-1] >= t or np.any(np.diff(ss) <= 0):
        raise ValidationError("time points must be distinct and lie in (0, t)")
    c = spectral_constant(K) ** spec.k
    if spec.ic == "flat":
        # y_j = x + B(t - s_j): prefix sums with weights s_{j+1} - s_j
        w = np.diff(np.append(ss, t))
        return c * chain_integral(w, alpha)
    # bridge from 0 to x rescaled to a Brownian motion: B(s) = a(s) W(r(s))
    a = (t - ss) / t
    r = ss * t / (t - ss)
    w = np.diff(np.concatenate([[0.0], r]))[::-1]
    return c * heat_kernel(t, x) ** 2 * float(np.prod(a ** (-alpha - 1))) * chain_integral(w, alpha)


# ---------------------------------------------------------------------------
# ||f - g||^2 at fixed times


_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)
_MAX_NODES = 12000


def _panel_nodes(breaks, order):
    x, w = order
    breaks = np.asarray(breaks, dtype=float)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    half = 0.5 * (breaks[1:] - breaks[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _cell_breaks(a, b, wmax, graded, levels=10, ratio=0.15):
    """Panel breakpoints in ``[a, b]``; geometric grading toward both ends if requested."""
    if graded:
        half = 0.5 * (b - a)
        offs = half * ratio ** np.arange(levels, 0, -1)
        inner = np.concatenate([[a], a + offs, [a + half], b - offs[::-1], [b]])
    else:
        inner = np.array([a, b])
    out = [inner[0]]
    for lo, hi in zip(inner[:-1], inner[1:]):
        pieces = max(1, int(math.ceil((hi - lo) / wmax)))
        out.extend(lo + (hi - lo) * np.arange(1, pieces + 1) / pieces)
    return np.array(out)


def _y_grid(spec: KernelSpec, c_lo: int, c_hi: int, wmax: float):
    p = spec.params
    dx = p.space_step
    white = p.Hstar == 0.5
    if white:
        lo_c, hi_c = c_lo, c_hi
    else:
        reach = 9.0 * math.sqrt(spec.t)
        lo = min(spec.x, 0.0) - reach
        hi = max(spec.x, 0.0) + reach
        lo_c = min(c_lo, math.floor(lo / dx))
        hi_c = max(c_hi, math.floor(hi / dx))
    nodes, weights = [], []
    order = _GL16 if white else _GL8
    for c in range(lo_c, hi_c + 1):
        nd, wt = _panel_nodes(_cell_breaks(c * dx, (c + 1) * dx, wmax, graded=not white), order)
        nodes.append(nd)
        weights.append(wt)
    nodes, weights = np.concatenate(nodes), np.concatenate(weights)
    if len(nodes) > _MAX_NODES:
        raise CapacityError(f"{len(nodes)} quadrature nodes exceed the budget of {_MAX_NODES}")
    return nodes, weights


def _chain_setup(spec: KernelSpec, s):
    p = spec.params
    mt = lattice_floor(spec.t, p.h)
    ss = np.sort(np.asarray(s, dtype=float))
    if len(ss) != spec.k:
        raise ValidationError(f"expected {spec.k} time points, got {len(ss)}")
    if ss[0] <= 0 or ss[-1] >= min(spec.t, mt * p.h) or np.any(np.diff(ss) <= 0):
        raise ValidationError("time points must be distinct and lie in (0, floor(t/h) h)")
    ls = [0] + [lattice_floor(v, p.h) for v in ss] + [mt]
    n = lattice_floor(spec.x, p.space_step)
    span = mt // 2 + 2
    c_lo, c_hi = min(0, n) - span, max(0, n) + span
    cells = np.arange(c_lo, c_hi + 1)

    def transition(j, ca, cb):
        """``G(s_j, y_j)`` between cells ``ca`` (point j) and ``cb`` (point j+1)."""
        jump = 2 * (cb - ca) + tau(mt - ls[j + 1]) - tau(mt - ls[j])
        gap = ls[j + 1] - ls[j]
        return np.vectorize(srw_pmf, otypes=[float])(gap, jump)

    return ss, ls, mt, n, cells, transition


def _g_norm2_fixed(spec: KernelSpec, s) -> float:
    ss, ls, mt, n, cells, transition = _chain_setup(spec, s)
    p = spec.params
    dx = p.space_step
    k = spec.k
    gram = _interval_inner(cells[:, None] * dx, (cells[:, None] + 1) * dx,
                           cells[None, :] * dx, (cells[None, :] + 1) * dx, p.Hstar)
    if spec.ic == "delta":
        v = transition(0, 0, cells)
        F = np.outer(v, v) * gram
    else:
        F = gram.copy()
    for j in range(1, k):
        T = transition(j, cells[:, None], cells[None, :])
        F = (T.T @ F @ T) * gram
    last = transition(k, cells, n)
    pref = dx ** -(k + (1 if spec.ic == "delta" else 0))
    return float(pref ** 2 * last @ F @ last)


def _fg_inner_fixed(spec: KernelSpec, s) -> float:
    ss, ls, mt, n, cells, transition = _chain_setup(spec, s)
    p = spec.params
    K = p.Hstar
    dx = p.space_step
    k, t, x = spec.k, spec.t, spec.x
    times = np.concatenate([[0.0], ss, [t]])
    gaps = np.diff(times)
    if k == 1:
        return _fg_inner_k1(spec, ss[0], ls, mt, n, cells, transition)
    relevant = gaps if spec.ic == "delta" else gaps[1:]
    wmax = min(dx, 0.5 * math.sqrt(relevant.min()))
    y, wy = _y_grid(spec, int(cells[0]), int(cells[-1]), wmax)
    psi = np.stack([_psi(y, c * dx, (c + 1) * dx, K) for c in cells], axis=1)  # (Ny, Nc)
    node = wy[:, None] * psi
    if spec.ic == "delta":
        F = node * (heat_kernel(gaps[0], y)[:, None] * transition(0, 0, cells)[None, :])
    else:
        F = node
    for j in range(1, k):
        P = heat_kernel(gaps[j], y[None, :] - y[:, None])  # P[y, y']
        A = P.T @ F
        F = node * (A @ transition(j, cells[:, None], cells[None, :]))
    last = heat_kernel(gaps[k], x - y)[:, None] * transition(k, cells, n)[None, :]
    pref = dx ** -(k + (1 if spec.ic == "delta" else 0))
    return float(pref * np.sum(F * last))


def _fg_inner_k1(spec: KernelSpec, s1, ls, mt, n, cells, transition) -> float:
    """Closed form at ``k = 1``: the continuum kernel is a single heat kernel in ``y``."""
    p = spec.params
    dx = p.space_step
    t, x = spec.t, spec.x
    w = transition(1, cells, n) / dx
    if spec.ic == "delta":
        w = w * transition(0, 0, cells) / dx
        # p_s(y) p_{t-s}(x - y) = p_t(x) p_r(s x / t - y), r = s (t - s) / t
        heat, scale = Heat(s1 * (t - s1) / t, s1 * x / t), heat_kernel(t, x)
    else:
        heat, scale = Heat(t - s1, x), 1.0
    return scale * _heat_cells(heat, Cells(dx, int(cells[0]), tuple(w)), p.Hstar)


def kernel_diff_norm(spec: KernelSpec, s: Sequence[float]) -> float:
    """``||f_k(s, .) - g_{h,k}(s, .)||^2`` in the k-fold space Hurst tensor space."""
    if spec.k > MAX_DIFF_K:
        raise CapacityError(f"kernel_diff_norm supports k <= {MAX_DIFF_K}")
    ff = f_norm2(spec, s)
    gg = _g_norm2_fixed(spec, s)
    fg = _fg_inner_fixed(spec, s)
    return max(ff - 2.0 * fg + gg, 0.0)


# ---------------------------------------------------------------------------
# lattice chaos norms ||g_{h,k}||^2 over space-time


_TENSOR_BUDGET = 2e10


def _states(m: int, n: int):
    """Reachable (time slab, space cell) pairs, slab-major."""
    slabs, cells = [], []
    for i in range(1, m + 1):
        r = m + 1 - i
        for c in range(n + (-r) // 2, n + r // 2 + 1):
            slabs.append(i)
            cells.append(c)
    return np.array(slabs), np.array(cells)


def _g_tensor(ic, k, m, n, slabs, cells, h):
    """``g_{h,k}`` on all k-tuples of states, shape ``(N,) * k``."""
    N = len(slabs)
    span = int(2 * (np.abs(cells).max() + abs(n)) + 4)
    table = np.array([[srw_pmf(r, d) for d in range(-span, span + 1)] for r in range(m + 1)])
    taus = np.array([tau(v) for v in range(m + 1)])
    out = np.empty((N,) * k)
    flat_out = out.reshape(N, -1)
    grids = np.meshgrid(*([np.arange(N)] * (k - 1)), indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1) if k > 1 else np.zeros((1, 0), np.int64)
    for first in range(N):
        idx = np.concatenate([np.full((len(rest), 1), first), rest], axis=1)
        ls = slabs[idx] - 1
        cs = cells[idx]
        order = np.argsort(ls, axis=1, kind="stable")
        ls = np.take_along_axis(ls, order, axis=1)
        cs = np.take_along_axis(cs, order, axis=1)
        B = len(idx)
        ls = np.concatenate([np.zeros((B, 1), np.int64), ls, np.full((B, 1), m)], axis=1)
        cs = np.concatenate([np.zeros((B, 1), np.int64), cs, np.full((B, 1), n)], axis=1)
        tt = taus[m - ls]
        gaps = np.diff(ls, axis=1)
        jumps = 2 * np.diff(cs, axis=1) + np.diff(tt, axis=1)
        vals = table[gaps, np.clip(jumps + span, 0, 2 * span)]
        vals[np.abs(jumps) > span] = 0.0
        start = 0 if ic == "delta" else 1
        flat_out[first] = vals[:, start:].prod(axis=1)
    dx = 2.0 * math.sqrt(h)
    return out / dx ** (k + (1 if ic == "delta" else 0))


def chaos_levels(ic: str, K: int, m: int, n: int, params: ModelParams) -> list:
    """Contributions ``||g_{h,k}||^2 / k!`` for ``k = 0..K`` (``k = 0``: squared zeroth term)."""
    if ic not in ("flat", "delta"):
        raise ValidationError(f"ic must be 'flat' or 'delta', got {ic!r}")
    if K < 0 or m < 1:
        raise ValidationError("need K >= 0 and m >= 1")
    h = params.h
    dx = params.space_step
    zeroth = 1.0 if ic == "flat" else srw_pmf(m, 2 * n - tau(m)) / dx
    out = [zeroth ** 2]
    if K == 0:
        return out
    slabs, cells = _states(m, n)
    N = len(slabs)
    if K * float(N) ** (K + 1) > _TENSOR_BUDGET:
        raise CapacityError(f"chaos tensor with {N} states and K={K} exceeds the budget")
    tg = gamma_corr(slabs[:, None] - slabs[None, :], params.H) * h ** (2 * params.H)
    sg = gamma_corr(cells[:, None] - cells[None, :], params.Hstar) * dx ** (2 * params.Hstar)
    C = params.coeff_factor * tg * sg
    for k in range(1, K + 1):
        T = _g_tensor(ic, k, m, n, slabs, cells, h)
        U = T
        for _ in range(k):
            U = np.tensordot(U, C, axes=([0], [0]))
        out.append(float(np.sum(T * U)) / math.factorial(k))
    return out


def chaos_second_moment(ic: str, K: int, m: int, n: int, params: ModelParams) -> float:
    """Second moment of ``u_h(m, n)`` truncated after chaos order ``K``."""
    return float(sum(chaos_levels(ic, K, m, n, params)))

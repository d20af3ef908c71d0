"""Fractional Brownian sheet cell averages on the space-time lattice.

A realisation of the discretised noise is the Gaussian field

    W_h(m, n) = (2 sqrt(h))^-1 * W([(m-1)h, mh) x [2n sqrt(h), 2(n+1) sqrt(h)))

indexed by time slabs ``m >= 1`` and space cells ``n``. Its covariance
factorises into a time part (Hurst ``H``) and a space part (Hurst ``Hstar``),
each of which is an inner product of interval indicators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import NumericalError, ValidationError, WindowError

__all__ = [
    "ModelParams",
    "NoiseGrid",
    "interval_inner",
    "gamma_corr",
    "wh_covariance",
    "cell_covariance",
    "quadrature_oracle",
    "window_covariance",
    "sample_field",
    "sample_values",
    "refine_aggregate",
    "make_rng",
]


@dataclass(frozen=True)
class ModelParams:
    """Hurst pair, time step and covariance-coefficient convention.

    ``paper_coeff=True`` multiplies every covariance by ``2**(2*Hstar)``,
    which reproduces the printed constant ``2**(4Hstar-2)`` instead of the
    ``2**(2Hstar-2)`` obtained from the cell widths.
    """

    H: float = 0.5
    Hstar: float = 0.5
    h: float = 1.0
    paper_coeff: bool = False

    def __post_init__(self):
        for name in ("H", "Hstar"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and 0.5 <= val < 1.0):
                raise ValidationError(f"{name}={val!r} must lie in [0.5, 1)")
        if not (isinstance(self.h, (int, float)) and self.h > 0 and math.isfinite(self.h)):
            raise ValidationError(f"h={self.h!r} must be a positive finite number")

    @property
    def space_step(self) -> float:
        """Width ``2 sqrt(h)`` of a space cell."""
        return 2.0 * math.sqrt(self.h)

    @property
    def coeff_factor(self) -> float:
        return 2.0 ** (2.0 * self.Hstar) if self.paper_coeff else 1.0

    @property
    def white_time(self) -> bool:
        return self.H == 0.5

    @property
    def white_space(self) -> bool:
        return self.Hstar == 0.5

    def with_h(self, h: float) -> "ModelParams":
        return replace(self, h=h)


def _check_hurst(K):
    if not 0.5 <= K < 1.0:
        raise ValidationError(f"Hurst exponent {K!r} must lie in [0.5, 1)")


def interval_inner(a: float, b: float, c: float, d: float, K: float) -> float:
    """Inner product of ``1_[a,b]`` and ``1_[c,d]`` in the Hurst-``K`` space.

    For ``K = 1/2`` this is the overlap length, otherwise the fBm increment
    covariance ``(|d-a|^2K + |c-b|^2K - |c-a|^2K - |d-b|^2K) / 2``.
    """
    if not (a < b and c < d):
        raise ValidationError(f"degenerate interval(s) [{a}, {b}], [{c}, {d}]")
    _check_hurst(K)
    return float(_interval_inner(a, b, c, d, K))


def _interval_inner(a, b, c, d, K):
    """Vectorised interval inner product without argument checks."""
    if K == 0.5:
        return np.clip(np.minimum(b, d) - np.maximum(a, c), 0.0, None)
    e = 2.0 * K
    return 0.5 * (np.abs(d - a) ** e + np.abs(c - b) ** e - np.abs(c - a) ** e - np.abs(d - b) ** e)


def gamma_corr(k, K: float):
    """Unit-cell correlation ``<1_[|k|,|k|+1], 1_[0,1]>`` (vectorised in ``k``)."""
    k = np.abs(np.asarray(k, dtype=float))
    return _interval_inner(k, k + 1.0, 0.0, 1.0, K)


def wh_covariance(dm: int, dn: int, params: ModelParams) -> float:
    """``Cov(W_h(m, n), W_h(m + dm, n + dn))``."""
    h = params.h
    dx = params.space_step
    tm = abs(dm) * h
    xn = abs(dn) * dx
    time_part = _interval_inner(0.0, h, tm, tm + h, params.H)
    space_part = _interval_inner(0.0, dx, xn, xn + dx, params.Hstar)
    return float(params.coeff_factor * time_part * space_part / (4.0 * h))


def cell_covariance(i1, c1, h1, i2, c2, h2, params: ModelParams):
    """Cross covariance of lattice cells at (possibly different) steps.

    ``(i1, c1)`` is a (time slab, space cell) pair of the grid with step ``h1``
    and ``(i2, c2)`` one of the grid with step ``h2``; all four index
    arguments broadcast. Both grids share the continuum noise, so this is
    the exact covariance used for cross-resolution moments.
    """
    i1, c1, i2, c2 = (np.asarray(v, dtype=float) for v in (i1, c1, i2, c2))
    w1, w2 = 2.0 * math.sqrt(h1), 2.0 * math.sqrt(h2)
    t = _interval_inner((i1 - 1) * h1, i1 * h1, (i2 - 1) * h2, i2 * h2, params.H)
    x = _interval_inner(c1 * w1, (c1 + 1) * w1, c2 * w2, (c2 + 1) * w2, params.Hstar)
    return params.coeff_factor * t * x / (w1 * w2)


# ---------------------------------------------------------------------------
# brute-force quadrature of the double integrals


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gl(f, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


def _singular_double_integral(a, b, c, d, K, tol, max_levels=4000):
    """``K(2K-1) int_a^b int_c^d |t-s|^(2K-2) ds dt`` by panel quadrature.

    The square is sliced along the diagonal direction: with ``v = s - t``
    the integrand depends on ``v`` alone and the slice length is piecewise
    linear. Panels are split at the kinks of the slice length and refined
    dyadically toward the singular line ``v = 0``.
    """
    beta = 2.0 * K - 2.0
    coef = K * (2.0 * K - 1.0)

    def slice_len(v):
        return np.clip(np.minimum(b, d - v) - np.maximum(a, c - v), 0.0, None)

    def integrand(v):
        return coef * np.abs(v) ** beta * slice_len(v)

    lo, hi = c - b, d - a
    breaks = sorted({lo, hi, c - a, d - b} | ({0.0} if lo < 0.0 < hi else set()))
    total = 0.0
    for p, q in zip(breaks[:-1], breaks[1:]):
        if q - p <= 0:
            continue
        if p == 0.0 or q == 0.0:
            total += _graded_toward(integrand, p, q, 0.0, tol, max_levels)
        else:
            total += _gl(integrand, p, q)
    return total


def _graded_toward(f, p, q, sing, tol, max_levels):
    """Integrate over [p, q] with geometric panels shrinking toward ``sing``."""
    far = q if sing == p else p
    length = abs(far - sing)
    sign = 1.0 if far > sing else -1.0
    total = 0.0
    prev = None
    outer = 1.0
    for _ in range(max_levels):
        inner = 0.5 * outer
        u0, u1 = sing + sign * inner * length, sing + sign * outer * length
        part = _gl(f, min(u0, u1), max(u0, u1))
        total += part
        outer = inner
        if prev is not None and part > 0:
            ratio = part / prev if prev > 0 else 0.0
            tail = part * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
            if tail < 0.05 * tol:
                return total + tail
        if part == 0.0 and prev == 0.0:
            return total
        prev = part
    raise NumericalError(f"singular quadrature did not reach tol={tol:g} within {max_levels} levels")


def quadrature_oracle(dm: int, dn: int, params: ModelParams, tol: float = 1e-9) -> float:
    """Brute-force covariance of ``W_h`` from the defining double integrals.

    Only meaningful when both Hurst parameters exceed 1/2 (the singular
    kernel form does not exist in the white case).
    """
    if params.H <= 0.5 or params.Hstar <= 0.5:
        raise ValidationError("quadrature_oracle needs H > 1/2 and Hstar > 1/2")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    h, dx = params.h, params.space_step
    tm, xn = abs(dm) * h, abs(dn) * dx
    # each factor is bounded by the squared cell width; split tol between them
    scale = 4.0 * h / params.coeff_factor
    time_part = _singular_double_integral(0.0, h, tm, tm + h, params.H, 0.5 * tol * scale / dx ** (2 * params.Hstar))
    space_part = _singular_double_integral(0.0, dx, xn, xn + dx, params.Hstar, 0.5 * tol * scale / h ** (2 * params.H))
    return params.coeff_factor * time_part * space_part / (4.0 * h)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class NoiseGrid:
    """One realisation of ``W_h`` on the window ``[1..M] x [n_lo..n_hi]``."""

    params: ModelParams
    n_lo: int
    n_hi: int
    values: np.ndarray  # shape (M, n_hi - n_lo + 1); row m-1 is time slab m
    seed: int | None = None
    source: str = "sampled"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.n_hi - self.n_lo + 1:
            raise ValidationError("values shape does not match the space window")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("noise values must be finite")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def at(self, m: int, n: int) -> float:
        if not (1 <= m <= self.M and self.n_lo <= n <= self.n_hi):
            raise WindowError(f"cell ({m}, {n}) outside window [1..{self.M}] x [{self.n_lo}..{self.n_hi}]")
        return float(self.values[m - 1, n - self.n_lo])

    def covers(self, M: int, n_lo: int, n_hi: int) -> bool:
        return M <= self.M and self.n_lo <= n_lo and n_hi <= self.n_hi


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed {seed} is not an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=seed))


def window_covariance(params: ModelParams, M: int, n_lo: int, n_hi: int) -> np.ndarray:
    """Dense covariance of the window, cells ordered row-major by (m, n)."""
    m = np.repeat(np.arange(1, M + 1), n_hi - n_lo + 1)
    n = np.tile(np.arange(n_lo, n_hi + 1), M)
    return cell_covariance(m[:, None], n[:, None], params.h, m[None, :], n[None, :], params.h, params)


def _cholesky_with_jitter(cov, what="window"):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * float(np.mean(np.diag(cov)))
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} covariance is not numerically positive definite") from exc


@lru_cache(maxsize=64)
def _window_factor(params: ModelParams, M: int, n_lo: int, n_hi: int) -> np.ndarray:
    factor = _cholesky_with_jitter(window_covariance(params, M, n_lo, n_hi))
    factor.setflags(write=False)
    return factor


def _check_window(M, n_lo, n_hi):
    if M < 1 or n_lo > n_hi:
        raise ValidationError(f"bad window M={M}, n_lo={n_lo}, n_hi={n_hi}")


def sample_values(params: ModelParams, M: int, n_lo: int, n_hi: int, seeds) -> np.ndarray:
    """Stack of realisations, one per seed, shape ``(len(seeds), M, ncells)``."""
    _check_window(M, n_lo, n_hi)
    L = _window_factor(params, M, n_lo, n_hi)
    dim = L.shape[0]
    z = np.empty((len(seeds), dim))
    for row, seed in enumerate(seeds):
        z[row] = make_rng(seed).standard_normal(dim)
    return (z @ L.T).reshape(len(seeds), M, n_hi - n_lo + 1)


def sample_field(params: ModelParams, M: int, n_lo: int, n_hi: int, seed: int) -> NoiseGrid:
    """Exact Gaussian draw of ``W_h`` on the window; deterministic in ``seed``."""
    values = sample_values(params, M, n_lo, n_hi, [seed])[0]
    return NoiseGrid(params, n_lo, n_hi, values, seed=int(seed))


def refine_aggregate(fine: NoiseGrid) -> NoiseGrid:
    """Aggregate a grid at step ``h/4`` into the nested grid at step ``h``.

    Each coarse cell is the union of 4 fine time slabs and 2 fine space
    cells, and ``W_h(m, n)`` is half the sum of the 8 fine values.
    """
    M, n_lo, n_hi = fine.M, fine.n_lo, fine.n_hi
    if M % 4 or n_lo % 2 or (n_hi + 1) % 2:
        raise WindowError(
            f"fine window [1..{M}] x [{n_lo}..{n_hi}] is not a union of coarse cells "
            "(need M divisible by 4, n_lo even, n_hi odd)"
        )
    blocks = fine.values.reshape(M // 4, 4, (n_hi - n_lo + 1) // 2, 2)
    coarse = 0.5 * blocks.sum(axis=(1, 3))
    params = fine.params.with_h(4.0 * fine.params.h)
    return NoiseGrid(params, n_lo // 2, (n_hi - 1) // 2, coarse, seed=fine.seed, source="aggregated")

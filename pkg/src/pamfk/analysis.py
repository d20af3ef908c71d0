"""Verification harness: local limit theorem, density gaps, rate studies
and Hölder diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.stats import binom

from .chaos import Heat, hstar_inner, lattice_density
from .errors import CapacityError, ValidationError
from .noise import ModelParams, make_rng, sample_values
from .solver import (
    SolveRequest,
    _cells,
    _cross_tables,
    _mc_steps,
    delta_prefactor,
    pair_moment,
    pair_q_diagonal,
    required_window,
    solve_values,
)
from .walk import lattice_floor, tau

__all__ = [
    "RateLevel",
    "RateReport",
    "llt_error",
    "llt_errors",
    "density_gap",
    "estimate_order",
    "fit_loglog",
    "theory_slope",
    "rate_study",
    "holder_scan",
    "HolderScan",
]


# ---------------------------------------------------------------------------
# local limit theorem


def _log_pmf(m, n):
    """``log P(S_m = n)`` on valid entries (vectorised, no parity check)."""
    return binom.logpmf((m + np.abs(n)) // 2, m, 0.5)


def llt_error(m: int) -> float:
    """``sup_n |G(m, n) - 2 p_m(n)|`` over ``n`` with the parity of ``m``."""
    if m < 1:
        raise ValidationError("m must be positive")
    n = np.arange(-m - 2, m + 3)
    n = n[(n + m) % 2 == 0]
    inside = np.abs(n) <= m
    pmf = np.zeros(len(n))
    pmf[inside] = np.exp(_log_pmf(m, n[inside]))
    gauss = 2.0 * np.exp(-n * n / (2.0 * m)) / math.sqrt(2.0 * math.pi * m)
    return float(np.max(np.abs(pmf - gauss)))


def llt_errors(m_values: Sequence[int]) -> np.ndarray:
    return np.array([llt_error(int(m)) for m in m_values])


# ---------------------------------------------------------------------------
# density gap


def density_gap(t: float, params: ModelParams, x: float = 0.0, sign: int = -1) -> float:
    """Squared space-Hurst norm of (rescaled lattice density) minus ``p_t(x - .)``."""
    if not t > 0:
        raise ValidationError("t must be positive")
    m = lattice_floor(t, params.h)
    n = lattice_floor(x, params.space_step)
    L = lattice_density(m, n, params, sign)
    p = Heat(t, x)
    val = hstar_inner(L, L, params) - 2.0 * hstar_inner(L, p, params) + hstar_inner(p, p, params)
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# order estimation


def fit_loglog(h, err2):
    """OLS of ``log err2`` on ``log h``: ``(slope, intercept, slope_se)``."""
    h = np.asarray(h, dtype=float)
    err2 = np.asarray(err2, dtype=float)
    if h.shape != err2.shape or h.size < 2:
        raise ValidationError("need at least two (h, err2) pairs")
    if np.any(h <= 0) or np.any(err2 <= 0):
        raise ValidationError("h and err2 must be positive")
    if np.unique(h).size != h.size:
        raise ValidationError("h values must be distinct")
    lx, ly = np.log(h), np.log(err2)
    xm, ym = lx.mean(), ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    if h.size > 2:
        resid = ly - intercept - slope * lx
        se = float(math.sqrt(np.sum(resid ** 2) / (h.size - 2) / sxx))
    else:
        se = 0.0
    return slope, intercept, se


def estimate_order(pairs) -> tuple:
    """Least-squares slope and intercept of ``log err2`` against ``log h``."""
    pairs = list(pairs)
    slope, intercept, _ = fit_loglog([p[0] for p in pairs], [p[1] for p in pairs])
    return slope, intercept


def theory_slope(params: ModelParams) -> float:
    return min(2 * params.H + params.Hstar - 1.0, 1.0)


# ---------------------------------------------------------------------------
# self-convergence rate study


@dataclass
class RateLevel:
    h: float
    err2: float
    method: str
    se: float | None = None


@dataclass
class RateReport:
    levels: list
    slope: float
    intercept: float
    theory_slope: float
    slope_se: float | None = None
    reference_h: float | None = None
    meta: dict = field(default_factory=dict)


def _level_request(ic, t, x, h, backend, paths=2, seed=0):
    m = lattice_floor(t, h)
    n = lattice_floor(x, 2.0 * math.sqrt(h))
    if m < 1:
        raise ValidationError(f"t={t} is below one time step at h={h}")
    return SolveRequest(ic, m, n, backend, paths=paths, seed=seed)


def _coarsen(steps: np.ndarray, rng) -> np.ndarray:
    """Coarse walk coupled to a fine one: sign of each block of 4 steps, ties by a fair coin."""
    count, m = steps.shape
    block = steps.reshape(count, m // 4, 4).sum(axis=2, dtype=np.int64)
    coin = 2 * rng.integers(0, 2, size=block.shape, dtype=np.int8) - 1
    return np.where(block == 0, coin, np.sign(block)).astype(np.int8)


def _exp_q(ca, pa, ra, cb, pb, rb):
    ct, cs, lo_a, lo_b = _cross_tables(pa, ra.m, ra.n, pb, rb.m, rb.n)
    return np.exp(pair_q_diagonal(ca, cb, ct, cs, lo_a, lo_b))


def _mc_err2(ic, base, h, h_ref, t, x, paths, seed):
    """Monte Carlo estimate of ``E[(u_h - u_ref)^2]`` with its standard error."""
    pa, pr = base.with_h(h), base.with_h(h_ref)
    ra = _level_request(ic, t, x, h, "montecarlo")
    rr = _level_request(ic, t, x, h_ref, "montecarlo")
    ratio = int(round(h / h_ref))
    rng = make_rng(seed)
    s1, s2 = (int(v) for v in rng.integers(0, 2 ** 63, size=2))
    if ic == "flat" and rr.m == ratio * ra.m:
        f1 = _mc_steps(rr.m, paths, s1)
        f2 = _mc_steps(rr.m, paths, s2)
        c1, c2 = f1, f2
        while c1.shape[1] > ra.m:
            c1, c2 = _coarsen(c1, rng), _coarsen(c2, rng)
        pref_a = pref_r = 1.0
    else:
        # no exact coupling available: independent draws, still unbiased
        end_a = tau(ra.m) - 2 * ra.n if ic == "delta" else None
        end_r = tau(rr.m) - 2 * rr.n if ic == "delta" else None
        s3, s4 = (int(v) for v in rng.integers(0, 2 ** 63, size=2))
        f1, f2 = _mc_steps(rr.m, paths, s1, end_r), _mc_steps(rr.m, paths, s2, end_r)
        c1, c2 = _mc_steps(ra.m, paths, s3, end_a), _mc_steps(ra.m, paths, s4, end_a)
        pref_a = delta_prefactor(ra.m, ra.n, h) if ic == "delta" else 1.0
        pref_r = delta_prefactor(rr.m, rr.n, h_ref) if ic == "delta" else 1.0
    A1, A2 = _cells(c1, ra.n), _cells(c2, ra.n)
    R1, R2 = _cells(f1, rr.n), _cells(f2, rr.n)
    terms = (pref_a ** 2 * _exp_q(A1, pa, ra, A2, pa, ra)
             + pref_r ** 2 * _exp_q(R1, pr, rr, R2, pr, rr)
             - pref_a * pref_r * _exp_q(A1, pa, ra, R2, pr, rr)
             - pref_a * pref_r * _exp_q(A2, pa, ra, R1, pr, rr))
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(paths))


def _exact_err2(ic, base, h, h_ref, t, x):
    backend = "transfer" if base.white_time else "enumerate"
    pa, pr = base.with_h(h), base.with_h(h_ref)
    ra = _level_request(ic, t, x, h, backend)
    rr = _level_request(ic, t, x, h_ref, backend)
    return pair_moment(ra, ra, pa) + pair_moment(rr, rr, pr) - 2.0 * pair_moment(ra, rr, pa, pr)


def rate_study(
    ic: str,
    params: ModelParams,
    L: int,
    t: float = 1.0,
    x: float = 0.0,
    method: str = "exact",
    paths: int = 100_000,
    seed: int = 0,
    levels: Sequence[float] | None = None,
    reference_h: float | None = None,
) -> RateReport:
    """Self-convergence study against the finest nested level.

    Levels are ``params.h * 4**-l`` for ``l = 0..L-1``; the last one is the
    reference and the remaining ``L - 1`` errors are fitted. ``levels`` and
    ``reference_h`` override the ladder (both must nest by powers of 4).
    """
    if method not in ("exact", "montecarlo"):
        raise ValidationError(f"method must be 'exact' or 'montecarlo', got {method!r}")
    if levels is None:
        if L < 3:
            raise ValidationError("a rate study needs L >= 3 levels (two fitted plus the reference)")
        ladder = [params.h * 4.0 ** -l for l in range(L)]
        levels, reference_h = ladder[:-1], ladder[-1]
    elif reference_h is None:
        raise ValidationError("reference_h is required with explicit levels")
    levels = sorted((float(v) for v in levels), reverse=True)
    if reference_h >= levels[-1]:
        raise ValidationError("the reference level must be finer than every fitted level")
    rows = []
    for i, h in enumerate(levels):
        if method == "exact":
            e2, se = _exact_err2(ic, params, h, reference_h, t, x), None
        else:
            e2, se = _mc_err2(ic, params, h, reference_h, t, x, paths, (seed + 7919 * i) % 2 ** 64)
        if not e2 > 0:
            raise CapacityError(f"estimated err2={e2:g} at h={h:g} is not positive; increase paths")
        rows.append(RateLevel(h, e2, "ExactPair" if method == "exact" else "MonteCarlo", se))
    slope, intercept, fit_se = fit_loglog([r.h for r in rows], [r.err2 for r in rows])
    if method == "montecarlo":
        # delta method on the log errors (independent levels)
        lx = np.log([r.h for r in rows])
        w = (lx - lx.mean()) / np.sum((lx - lx.mean()) ** 2)
        rel = np.array([r.se / r.err2 for r in rows])
        slope_se = float(math.sqrt(np.sum((w * rel) ** 2) + fit_se ** 2))
    else:
        slope_se = fit_se
    return RateReport(rows, slope, intercept, theory_slope(params), slope_se, reference_h,
                      meta={"ic": ic, "t": t, "x": x, "method": method})


# ---------------------------------------------------------------------------
# Hölder diagnostics


@dataclass
class HolderScan:
    rows: list  # (direction, lag, mean_sq, se)
    time_exponent: float
    time_exponent_se: float
    space_exponent: float
    space_exponent_se: float


def _fit_exponent(lags, msd):
    lags, msd = np.asarray(lags, float), np.asarray(msd, float)
    ok = (lags > 0) & (msd > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    if ok.sum() == 2:
        slope = float(np.diff(np.log(msd[ok]))[0] / np.diff(np.log(lags[ok]))[0])
        return slope, float("nan")
    res = stats.linregress(np.log(lags[ok]), np.log(msd[ok]))
    return float(res.slope), float(res.stderr)


def holder_scan(
    params: ModelParams,
    t_grid: Sequence[float],
    x_grid: Sequence[float],
    seeds: Sequence[int],
    backend: str | None = None,
) -> HolderScan:
    """Empirical ``E|u_h(t, x) - u_h(s, y)|^2`` around ``(t_grid[0], x_grid[0])``.

    Temporal lags pair ``(t_grid[0], x0)`` with ``(t, x0)``; spatial lags pair
    ``(t0, x_grid[0])`` with ``(t0, x)``. Exponents come from a log-log fit
    and are diagnostics only.
    """
    if len(seeds) < 2:
        raise ValidationError("need at least two noise seeds")
    if backend is None:
        backend = "transfer" if params.white_time else "enumerate"
    h, dx = params.h, params.space_step
    t0, x0 = float(t_grid[0]), float(x_grid[0])
    points = [(t0, x0)] + [(float(t), x0) for t in t_grid[1:]] + [(t0, float(x)) for x in x_grid[1:]]
    lattice = [(lattice_floor(t, h), lattice_floor(x, dx)) for t, x in points]
    if min(m for m, _ in lattice) < 1:
        raise ValidationError("every time in t_grid must be at least one step h")
    M = max(m for m, _ in lattice)
    lo = min(required_window(m, n)[1] for m, n in lattice)
    hi = max(required_window(m, n)[2] for m, n in lattice)
    values = sample_values(params, M, lo, hi, [int(s) for s in seeds])
    fields = []
    for m, n in lattice:
        # u_h(m, n) only reads slabs 1..m, so the top rows can be dropped
        mean, _ = solve_values(SolveRequest("flat", m, n, backend), values[:, :m, :], lo, params)
        fields.append(mean)
    base = fields[0]
    rows = []
    nt = len(t_grid) - 1
    for j, (pt, (m, n)) in enumerate(zip(points[1:], lattice[1:])):
        d2 = (fields[j + 1] - base) ** 2
        direction = "time" if j < nt else "space"
        lag = abs(pt[0] - t0) if direction == "time" else abs(pt[1] - x0)
        rows.append((direction, lag, float(d2.mean()), float(d2.std(ddof=1) / math.sqrt(len(d2)))))
    te, tse = _fit_exponent([r[1] for r in rows if r[0] == "time"], [r[2] for r in rows if r[0] == "time"])
    se_, sse = _fit_exponent([r[1] for r in rows if r[0] == "space"], [r[2] for r in rows if r[0] == "space"])
    return HolderScan(rows, te, tse, se_, sse)

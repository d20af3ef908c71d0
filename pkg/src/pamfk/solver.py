"""Discrete Feynman-Kac approximation ``u_h`` and its exact noise moments.

For the flat initial condition

    u_h(m, n) = E^S[ :exp:( sum_{i=1}^m W_h(i, floor(S_{m+1-i} / 2) + n) ) ],

and for the delta initial condition the walk is replaced by the walk bridge
ending at ``tau(m) - 2n`` and the expectation is multiplied by
``G(m, 2n - tau(m)) / (2 sqrt(h))``.

Three backends evaluate the walk expectation: exhaustive enumeration
(any Hurst pair, ``m <= 24``), a transfer matrix over walk positions
(white time only, polynomial cost) and plain Monte Carlo over paths.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, ValidationError, WindowError
from .noise import ModelParams, NoiseGrid, _interval_inner, make_rng, wh_covariance
from .walk import (
    MAX_ENUMERATION_STEPS,
    WalkPath,
    bridge_step_array,
    srw_pmf,
    step_array,
    tau,
)

__all__ = [
    "SolveRequest",
    "Estimate",
    "wick_exp",
    "path_statistics",
    "solve",
    "solve_estimate",
    "solve_values",
    "pair_moment",
    "pair_moment_estimate",
    "required_window",
    "delta_prefactor",
    "saturation_count",
]

BACKENDS = ("enumerate", "transfer", "montecarlo")
_PAIR_CHUNK = 512

_saturated = 0


def saturation_count() -> int:
    """Number of Wick exponentials that overflowed to +inf so far."""
    return _saturated


def _note_overflow(arr):
    global _saturated
    n_inf = int(np.count_nonzero(np.isposinf(arr)))
    if n_inf:
        _saturated += n_inf
        warnings.warn(f"{n_inf} Wick exponential(s) saturated to +inf", RuntimeWarning, stacklevel=3)


class Estimate(NamedTuple):
    value: float
    se: float


@dataclass(frozen=True)
class SolveRequest:
    """What to evaluate: initial condition, lattice point and backend."""

    ic: str = "flat"
    m: int = 1
    n: int = 0
    backend: str = "enumerate"
    paths: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.ic not in ("flat", "delta"):
            raise ValidationError(f"ic must be 'flat' or 'delta', got {self.ic!r}")
        if self.backend not in BACKENDS:
            raise ValidationError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if int(self.m) < 1:
            raise ValidationError("m must be a positive integer")
        if self.backend == "montecarlo" and self.paths < 2:
            raise ValidationError("MonteCarlo needs at least 2 paths")


def wick_exp(z, v):
    """``exp(z - v/2)``; overflow saturates to +inf and is counted."""
    if np.any(np.asarray(v) < 0):
        raise ValidationError("variance must be nonnegative")
    with np.errstate(over="ignore"):
        out = np.exp(np.asarray(z, dtype=float) - 0.5 * np.asarray(v, dtype=float))
    _note_overflow(out)
    return float(out) if out.ndim == 0 else out


def required_window(m: int, n: int):
    """``(M, n_lo, n_hi)`` of the cells reachable from ``(m, n)``."""
    return m, n + (-m) // 2, n + m // 2


def delta_prefactor(m: int, n: int, h: float) -> float:
    return srw_pmf(m, 2 * n - tau(m)) / (2.0 * math.sqrt(h))


def _bridge_end(m, n):
    return tau(m) - 2 * n


# ---------------------------------------------------------------------------
# path -> visited cells


def _cells(steps: np.ndarray, n: int) -> np.ndarray:
    """Visited space cell per time slab: column ``i-1`` holds slab ``i``."""
    pos = np.cumsum(steps, axis=1, dtype=np.int64)
    return pos[:, ::-1] // 2 + n


@lru_cache(maxsize=128)
def _cov_table(params: ModelParams, m: int, span: int) -> np.ndarray:
    """``wh_covariance(dm, dn)`` for ``0 <= dm < m``, ``0 <= dn <= span``."""
    tab = np.array([[wh_covariance(dm, dn, params) for dn in range(span + 1)] for dm in range(m)])
    tab.setflags(write=False)
    return tab


def _path_variance(cells: np.ndarray, params: ModelParams) -> np.ndarray:
    """``Var^W`` of the summed noise along each row of visited cells."""
    count, m = cells.shape
    if params.white_time:
        return np.full(count, m * wh_covariance(0, 0, params))
    tab = _cov_table(params, m, m)
    dm = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    out = np.empty(count)
    chunk = max(1, 2 ** 22 // (m * m))
    for lo in range(0, count, chunk):
        c = cells[lo:lo + chunk]
        dn = np.abs(c[:, :, None] - c[:, None, :])
        out[lo:lo + chunk] = tab[dm[None], dn].sum(axis=(1, 2))
    return out


def _check_cover(noise_lo, noise_hi, noise_M, m, n):
    M, lo, hi = required_window(m, n)
    if M > noise_M or lo < noise_lo or hi > noise_hi:
        raise WindowError(
            f"noise window [1..{noise_M}] x [{noise_lo}..{noise_hi}] does not cover "
            f"[1..{M}] x [{lo}..{hi}] needed for (m={m}, n={n})"
        )


def path_statistics(path: WalkPath, noise: NoiseGrid, n: int):
    """Summed noise along a path and its variance under the noise law."""
    steps = np.asarray(path.steps, dtype=np.int8)[None, :]
    cells = _cells(steps, n)[0]
    m = len(cells)
    if m > noise.M or cells.min() < noise.n_lo or cells.max() > noise.n_hi:
        raise WindowError("noise window does not cover the path")
    x_sum = float(noise.values[np.arange(m), cells - noise.n_lo].sum())
    v = float(_path_variance(cells[None, :], noise.params)[0])
    return x_sum, v


# ---------------------------------------------------------------------------
# single-realisation evaluation (vectorised over a batch of noise grids)


def _enum_steps(req: SolveRequest) -> np.ndarray:
    if req.m > MAX_ENUMERATION_STEPS:
        raise CapacityError(
            f"Enumerate backend is capped at m={MAX_ENUMERATION_STEPS} (got {req.m}); use MonteCarlo"
        )
    if req.ic == "flat":
        return step_array(req.m)
    return bridge_step_array(req.m, _bridge_end(req.m, req.n))


def _pmf_table(m: int) -> np.ndarray:
    """``tab[r, j] = G(r, j - m)`` for ``r = 0..m``."""
    return np.array([[srw_pmf(r, j - m) for j in range(2 * m + 1)] for r in range(m + 1)])


def _mc_steps(m: int, paths: int, seed: int, end: int | None = None) -> np.ndarray:
    rng = make_rng(seed)
    if end is None:
        return (2 * rng.integers(0, 2, size=(paths, m), dtype=np.int8) - 1).astype(np.int8)
    tab = _pmf_table(m)
    u = rng.random((paths, m))
    pos = np.zeros(paths, dtype=np.int64)
    steps = np.empty((paths, m), dtype=np.int8)
    for k in range(m):
        rem = m - k
        num = tab[rem - 1, np.clip(end - pos - 1 + m, 0, 2 * m)]
        den = tab[rem, np.clip(end - pos + m, 0, 2 * m)]
        up = u[:, k] < 0.5 * num / den
        steps[:, k] = np.where(up, 1, -1)
        pos += steps[:, k]
    return steps


def _path_functional(values, n_lo, cells, v):
    """``:exp:`` of the summed noise, shape ``(batch, paths)``."""
    m = cells.shape[1]
    x = values[:, np.arange(m)[None, :], cells - n_lo].sum(axis=2)
    with np.errstate(over="ignore"):
        out = np.exp(x - 0.5 * v[None, :])
    _note_overflow(out)
    return out


def _transfer_batch(values, n_lo, req: SolveRequest, params: ModelParams):
    if not params.white_time:
        raise ValidationError("TransferMatrix backend requires H = 1/2 (white-in-time noise)")
    m, n = req.m, req.n
    v1 = wh_covariance(0, 0, params)
    batch = values.shape[0]
    pos = np.arange(-m, m + 1)
    col = pos // 2 + n - n_lo
    prob = np.zeros((batch, 2 * m + 1))
    prob[:, m] = 1.0
    for k in range(1, m + 1):
        nxt = np.zeros_like(prob)
        nxt[:, 1:] += 0.5 * prob[:, :-1]
        nxt[:, :-1] += 0.5 * prob[:, 1:]
        with np.errstate(over="ignore"):
            factor = np.exp(values[:, m - k, col] - 0.5 * v1)
        _note_overflow(factor)
        prob = nxt * factor
    if req.ic == "flat":
        return prob.sum(axis=1)
    end = _bridge_end(m, n)
    return prob[:, end + m] / (2.0 * math.sqrt(params.h))


def solve_values(req: SolveRequest, values: np.ndarray, n_lo: int, params: ModelParams):
    """Evaluate ``u_h`` on a stack of noise windows ``values[b, m-1, n-n_lo]``.

    Returns ``(mean, se)`` arrays over the batch; ``se`` is zero for the
    exact backends.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    _check_cover(n_lo, n_lo + values.shape[2] - 1, values.shape[1], req.m, req.n)
    batch = values.shape[0]
    if req.ic == "delta":
        pref = delta_prefactor(req.m, req.n, params.h)
        if pref == 0.0:
            return np.zeros(batch), np.zeros(batch)
    else:
        pref = 1.0
    if req.backend == "transfer":
        return _transfer_batch(values, n_lo, req, params), np.zeros(batch)
    if req.backend == "enumerate":
        steps = _enum_steps(req)
    else:
        end = _bridge_end(req.m, req.n) if req.ic == "delta" else None
        steps = _mc_steps(req.m, req.paths, req.seed, end)
    cells = _cells(steps, req.n)
    v = _path_variance(cells, params)
    mean = np.empty(batch)
    se = np.zeros(batch)
    for b in range(batch):
        f = _path_functional(values[b:b + 1], n_lo, cells, v)[0]
        mean[b] = f.mean()
        if req.backend == "montecarlo":
            se[b] = f.std(ddof=1) / math.sqrt(len(f))
    return pref * mean, pref * se


def solve_estimate(req: SolveRequest, noise: NoiseGrid, params: ModelParams | None = None) -> Estimate:
    params = noise.params if params is None else params
    mean, se = solve_values(req, noise.values, noise.n_lo, params)
    return Estimate(float(mean[0]), float(se[0]))


def solve(req: SolveRequest, noise: NoiseGrid, params: ModelParams | None = None) -> float:
    """``u_h(m, n)`` for one noise realisation (Monte Carlo: the sample mean)."""
    return solve_estimate(req, noise, params).value


# ---------------------------------------------------------------------------
# exact second moments E[u_A u_B]


def _check_pair(pa: ModelParams, pb: ModelParams):
    if (pa.H, pa.Hstar, pa.paper_coeff) != (pb.H, pb.Hstar, pb.paper_coeff):
        raise ValidationError("paired requests must share H, Hstar and the coefficient convention")
    ratio = max(pa.h, pb.h) / min(pa.h, pb.h)
    r = round(math.log(ratio, 4))
    if abs(ratio - 4.0 ** r) > 1e-9 * ratio:
        raise ValidationError(f"step ratio {ratio:g} is not a power of 4 (grids would not nest)")
    return int(round(4.0 ** r))


def _cross_tables(pa, ma, na, pb, mb, nb):
    """Time and space factors of the cross covariance between two grids."""
    ha, hb = pa.h, pb.h
    wa, wb = 2 * math.sqrt(ha), 2 * math.sqrt(hb)
    ia = np.arange(1, ma + 1, dtype=float)
    ib = np.arange(1, mb + 1, dtype=float)
    ct = _interval_inner((ia[:, None] - 1) * ha, ia[:, None] * ha, (ib[None] - 1) * hb, ib[None] * hb, pa.H)
    _, lo_a, hi_a = required_window(ma, na)
    _, lo_b, hi_b = required_window(mb, nb)
    ca = np.arange(lo_a, hi_a + 1, dtype=float)[:, None]
    cb = np.arange(lo_b, hi_b + 1, dtype=float)[None, :]
    cs = _interval_inner(ca * wa, (ca + 1) * wa, cb * wb, (cb + 1) * wb, pa.Hstar)
    cs = cs * pa.coeff_factor / (wa * wb)
    return ct, cs, lo_a, lo_b


def _pair_prefactor(req, params):
    return delta_prefactor(req.m, req.n, params.h) if req.ic == "delta" else 1.0


def _pair_q(cells_a, cells_b, ct, cs, lo_a, lo_b):
    """``Q[p, q] = sum_ij ct[i, j] cs[a_i(p), b_j(q)]`` for all path pairs."""
    # r[p, j, c] = sum_i ct[i, j] cs[a_i(p), c]
    r = np.einsum("ij,pic->pjc", ct, cs[cells_a - lo_a], optimize=True)
    q = np.zeros((cells_a.shape[0], cells_b.shape[0]))
    bj = cells_b - lo_b
    for j in range(cells_b.shape[1]):
        q += r[:, j, :][:, bj[:, j]]
    return q


def _pair_enumerate(ra, pa, rb, pb):
    sa, sb = _enum_steps(ra), _enum_steps(rb)
    ca, cb = _cells(sa, ra.n), _cells(sb, rb.n)
    ct, cs, lo_a, lo_b = _cross_tables(pa, ra.m, ra.n, pb, rb.m, rb.n)
    total = 0.0
    for lo in range(0, ca.shape[0], _PAIR_CHUNK):
        q = _pair_q(ca[lo:lo + _PAIR_CHUNK], cb, ct, cs, lo_a, lo_b)
        with np.errstate(over="ignore"):
            e = np.exp(q)
        _note_overflow(e)
        total += e.sum(axis=1).sum()
    return total / (ca.shape[0] * cb.shape[0])


def _pair_montecarlo(ra, pa, rb, pb):
    end_a = _bridge_end(ra.m, ra.n) if ra.ic == "delta" else None
    end_b = _bridge_end(rb.m, rb.n) if rb.ic == "delta" else None
    paths = min(ra.paths, rb.paths)
    sa = _mc_steps(ra.m, paths, ra.seed, end_a)
    # an independent stream for the second walk
    sb = _mc_steps(rb.m, paths, (rb.seed + 0x9E3779B97F4A7C15) % 2 ** 64, end_b)
    ca, cb = _cells(sa, ra.n), _cells(sb, rb.n)
    ct, cs, lo_a, lo_b = _cross_tables(pa, ra.m, ra.n, pb, rb.m, rb.n)
    q = pair_q_diagonal(ca, cb, ct, cs, lo_a, lo_b)
    e = np.exp(q)
    _note_overflow(e)
    return Estimate(float(e.mean()), float(e.std(ddof=1) / math.sqrt(len(e))))


def pair_q_diagonal(cells_a, cells_b, ct, cs, lo_a, lo_b, chunk=2048):
    """``Q`` for matched rows ``(cells_a[p], cells_b[p])`` only."""
    out = np.empty(cells_a.shape[0])
    for lo in range(0, len(out), chunk):
        a = cells_a[lo:lo + chunk] - lo_a
        b = cells_b[lo:lo + chunk] - lo_b
        out[lo:lo + chunk] = np.einsum("pij,ij->p", cs[a[:, :, None], b[:, None, :]], ct)
    return out


def _pair_transfer(ra, pa, rb, pb):
    """Synchronised two-walk transfer matrix (white time only)."""
    if not pa.white_time:
        raise ValidationError("the two-walk transfer matrix requires H = 1/2")
    swap = pa.h < pb.h
    if swap:
        ra, pa, rb, pb = rb, pb, ra, pa
    ratio = int(round(pa.h / pb.h))
    ma, mb = ra.m, rb.m
    extra = mb - ratio * ma
    if extra < 0:
        raise ValidationError("the finer request must cover the coarser time horizon")
    ct, cs, lo_a, lo_b = _cross_tables(pa, ma, ra.n, pb, mb, rb.n)
    overlap = pb.h  # time overlap of a fine slab with its enclosing coarse slab
    pos_a = np.arange(-ma, ma + 1)
    pos_b = np.arange(-mb, mb + 1)
    ia = pos_a // 2 + ra.n - lo_a
    ib = pos_b // 2 + rb.n - lo_b
    weight = np.exp(overlap * cs[ia[:, None], ib[None, :]])
    prob = np.zeros((2 * ma + 1, 2 * mb + 1))
    prob[ma, mb] = 1.0

    def step(arr, axis):
        out = np.zeros_like(arr)
        if axis == 0:
            out[1:] += 0.5 * arr[:-1]
            out[:-1] += 0.5 * arr[1:]
        else:
            out[:, 1:] += 0.5 * arr[:, :-1]
            out[:, :-1] += 0.5 * arr[:, 1:]
        return out

    for _ in range(extra):
        prob = step(prob, 1)
    for _ in range(ma):
        prob = step(prob, 0)
        for _ in range(ratio):
            prob = step(prob, 1) * weight
    if not np.all(np.isfinite(prob)):
        _note_overflow(prob)
    if ra.ic == "flat":
        prob = prob.sum(axis=0, keepdims=True)
        row = 0
    else:
        row = _bridge_end(ma, ra.n) + ma
        prob = prob[row:row + 1]
    if rb.ic == "flat":
        val = prob.sum()
    else:
        val = prob[0, _bridge_end(mb, rb.n) + mb]
    # bridges were not renormalised, so the prefactor reduces to 1/(2 sqrt h)
    for req, p in ((ra, pa), (rb, pb)):
        if req.ic == "delta":
            val /= 2.0 * math.sqrt(p.h)
    return float(val)


def pair_moment_estimate(ra: SolveRequest, rb: SolveRequest, pa: ModelParams, pb: ModelParams | None = None) -> Estimate:
    """``E^W[u_A u_B]`` when both fields are driven by the same continuum noise.

    Uses the two-walk transfer matrix when both requests ask for
    TransferMatrix, Monte Carlo over independent path pairs when either asks
    for MonteCarlo, and exhaustive pair enumeration otherwise.
    """
    pb = pa if pb is None else pb
    _check_pair(pa, pb)
    pref = _pair_prefactor(ra, pa) * _pair_prefactor(rb, pb)
    if pref == 0.0:
        return Estimate(0.0, 0.0)
    backends = {ra.backend, rb.backend}
    if backends == {"transfer"}:
        return Estimate(_pair_transfer(ra, pa, rb, pb), 0.0)
    if "montecarlo" in backends:
        est = _pair_montecarlo(ra, pa, rb, pb)
        return Estimate(pref * est.value, pref * est.se)
    if (2 ** ra.m) * (2 ** rb.m) > 2 ** (2 * MAX_ENUMERATION_STEPS):
        raise CapacityError("too many path pairs for exhaustive enumeration")
    if ra.m > 14 and rb.m > 14:
        raise CapacityError(
            f"pair enumeration of 2^{ra.m} x 2^{rb.m} path pairs exceeds the budget; "
            "use TransferMatrix (H = 1/2) or MonteCarlo"
        )
    return Estimate(pref * _pair_enumerate(ra, pa, rb, pb), 0.0)


def pair_moment(ra: SolveRequest, rb: SolveRequest, pa: ModelParams, pb: ModelParams | None = None) -> float:
    return pair_moment_estimate(ra, rb, pa, pb).value

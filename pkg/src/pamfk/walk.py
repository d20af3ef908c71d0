"""Simple random walks, walk bridges and the lattice index maps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import binom

from .errors import CapacityError, ValidationError
from .noise import ModelParams, make_rng

__all__ = [
    "WalkPath",
    "KernelPoint",
    "srw_pmf",
    "srw_pmf_exact",
    "pmf_row",
    "tau",
    "lattice_floor",
    "enumerate_paths",
    "step_array",
    "bridge_step_array",
    "bridge_step_prob",
    "sample_bridge",
    "lattice_indices",
    "MAX_ENUMERATION_STEPS",
]

MAX_ENUMERATION_STEPS = 24
_EXACT_LIMIT = 60


@dataclass(frozen=True)
class WalkPath:
    steps: tuple

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.steps):
            raise ValidationError("walk steps must be +1 or -1")

    @property
    def m(self) -> int:
        return len(self.steps)

    @property
    def positions(self) -> tuple:
        """``S_0, ..., S_m`` with ``S_0 = 0``."""
        out = [0]
        for s in self.steps:
            out.append(out[-1] + s)
        return tuple(out)


@dataclass(frozen=True)
class KernelPoint:
    k: int
    s_frak: tuple  # time gaps, length k + 1
    y_frak: tuple  # parity-corrected space gaps, length k + 1


def tau(n: int) -> int:
    """0 for even ``n``, 1 for odd ``n`` (negative integers included)."""
    return int(n) % 2


def _reachable(m, n):
    return m >= 0 and abs(n) <= m and (m + n) % 2 == 0


def srw_pmf_exact(m: int, n: int) -> Fraction:
    if not _reachable(m, n):
        return Fraction(0)
    return Fraction(math.comb(m, (m + n) // 2), 2 ** m)


def srw_pmf(m: int, n: int) -> float:
    """``P(S_m = n)`` for the simple random walk started at 0."""
    m, n = int(m), int(n)
    if not _reachable(m, n):
        return 0.0
    if m <= _EXACT_LIMIT:
        return math.comb(m, (m + n) // 2) / 2.0 ** m
    # saddle-point log pmf; |n| keeps the value exactly symmetric
    return float(binom.pmf((m + abs(n)) // 2, m, 0.5))


def pmf_row(m: int) -> np.ndarray:
    """``P(S_m = n)`` for ``n = -m..m`` as an array of length ``2m + 1``."""
    if m <= _EXACT_LIMIT:
        return np.array([srw_pmf(m, n) for n in range(-m, m + 1)])
    n = np.arange(-m, m + 1)
    out = binom.pmf((m + np.abs(n)) // 2, m, 0.5)
    out[(n + m) % 2 == 1] = 0.0
    return out


def lattice_floor(v: float, step: float) -> int:
    """``floor(v / step)``, snapping ratios within 1e-9 of an integer."""
    r = v / step
    k = round(r)
    return int(k) if abs(r - k) < 1e-9 else math.floor(r)


def step_array(m: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Steps of paths ``start..stop-1`` in enumeration order, shape ``(count, m)``.

    Path ``j`` takes step ``+1`` at time ``i`` iff bit ``i`` of ``j`` is set.
    """
    stop = 2 ** m if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(m, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def enumerate_paths(m: int) -> Iterator[WalkPath]:
    """All ``2^m`` walks of length ``m``; each has probability ``2^-m``."""
    if m < 1:
        raise ValidationError("path length must be positive")
    if m > MAX_ENUMERATION_STEPS:
        raise CapacityError(
            f"enumerating 2^{m} paths exceeds the cap of 2^{MAX_ENUMERATION_STEPS}; "
            "use the MonteCarlo backend instead"
        )
    chunk = 1 << 14
    for start in range(0, 2 ** m, chunk):
        for row in step_array(m, start, min(start + chunk, 2 ** m)):
            yield WalkPath(tuple(int(s) for s in row))


def bridge_step_array(m: int, end: int) -> np.ndarray:
    """Steps of all paths with ``S_m = end`` (uniform under the bridge law)."""
    if not _reachable(m, end):
        raise ValidationError(f"endpoint {end} unreachable in {m} steps")
    if m > MAX_ENUMERATION_STEPS:
        raise CapacityError(f"bridge enumeration of length {m} exceeds the cap {MAX_ENUMERATION_STEPS}")
    steps = step_array(m)
    return steps[steps.sum(axis=1, dtype=np.int64) == end]


def bridge_step_prob(k: int, pos: int, m: int, end: int) -> float:
    """``P(S_{k+1} = pos + 1 | S_k = pos, S_m = end)``."""
    if not (0 <= k < m) or not _reachable(m - k, end - pos):
        raise ValidationError(f"endpoint {end} unreachable from S_{k}={pos} in {m - k} steps")
    return 0.5 * srw_pmf(m - k - 1, end - pos - 1) / srw_pmf(m - k, end - pos)


def sample_bridge(m: int, end: int, seed: int) -> WalkPath:
    """Draw a walk bridge from 0 to ``end`` in ``m`` steps."""
    if not _reachable(m, end):
        raise ValidationError(f"endpoint {end} unreachable in {m} steps")
    u = make_rng(seed).random(m)
    pos, steps = 0, []
    for k in range(m):
        step = 1 if u[k] < bridge_step_prob(k, pos, m, end) else -1
        steps.append(step)
        pos += step
    return WalkPath(tuple(steps))


def lattice_indices(t: float, x: float, s: Sequence[float], y: Sequence[float], params: ModelParams) -> KernelPoint:
    """Lattice gaps of continuum points ``(s_i, y_i)`` sorted in time.

    Ties in ``s`` are broken by the original position (stable sort).
    """
    s, y = list(s), list(y)
    if len(s) != len(y) or not s:
        raise ValidationError("s and y must be non-empty and of equal length")
    h, dx = params.h, params.space_step
    order = sorted(range(len(s)), key=lambda i: s[i])
    ss = [0.0] + [s[i] for i in order] + [t]
    yy = [0.0] + [y[i] for i in order] + [x]
    mt = lattice_floor(t, h)
    ls = [lattice_floor(v, h) for v in ss]
    cs = [lattice_floor(v, dx) for v in yy]
    s_frak = tuple(ls[i + 1] - ls[i] for i in range(len(s) + 1))
    y_frak = tuple(
        2 * (cs[i + 1] - cs[i]) + tau(mt - ls[i + 1]) - tau(mt - ls[i]) for i in range(len(s) + 1)
    )
    return KernelPoint(len(s), s_frak, y_frak)

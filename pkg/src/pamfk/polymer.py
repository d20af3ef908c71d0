"""Directed polymers in a correlated Gaussian environment.

The environment ``omega(j, s)`` lives on the sites a walk can reach,
``1 <= j <= m``, ``|s| <= j``, ``j + s`` even, with correlation
``Gamma(j - j') Gamma*(floor(s/2) - floor(s'/2))``. After the scaling
``kappa = c m^{-(2H + H* - 1)/2}`` the Wick-renormalised partition function
has the law of ``u_{1/m}(m, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CapacityError, ValidationError
from .noise import ModelParams, _cholesky_with_jitter, gamma_corr, make_rng
from .solver import SolveRequest, _note_overflow, pair_moment
from .walk import MAX_ENUMERATION_STEPS, bridge_step_array, srw_pmf, step_array, tau

__all__ = [
    "PolymerEnv",
    "omega_cov",
    "kappa",
    "sites",
    "sample_env",
    "sample_env_batch",
    "partition",
    "partition_batch",
    "partition_samples",
    "match_moments",
    "wasserstein_p",
]

_PAIR_LIMIT = 12


@dataclass
class PolymerEnv:
    """``values[j - 1, s + m]`` holds ``omega(j, s)``; unreachable entries are 0."""

    m: int
    values: np.ndarray
    seed: int | None = None

    def at(self, j: int, s: int) -> float:
        _check_site(j, s, self.m)
        return float(self.values[j - 1, s + self.m])


def _check_site(j, s, m=None):
    if (j + s) % 2 or j < 0 or abs(s) > max(j, 0) or (m is not None and not 1 <= j <= m):
        raise ValidationError(f"({j}, {s}) is not a reachable site with j + s even")


def omega_cov(p1, p2, params: ModelParams) -> float:
    """Environment correlation between sites ``p1 = (m1, n1)`` and ``p2 = (m2, n2)``."""
    (m1, n1), (m2, n2) = p1, p2
    for m_, n_ in (p1, p2):
        if (m_ + n_) % 2:
            raise ValidationError(f"site ({m_}, {n_}) is off the even-sum lattice")
    return float(gamma_corr(m1 - m2, params.H) * gamma_corr(n1 // 2 - n2 // 2, params.Hstar))


def kappa(m: int, params: ModelParams) -> float:
    c = 2.0 ** (2 * params.Hstar - 1) if params.paper_coeff else 2.0 ** (params.Hstar - 1)
    return c * m ** (-(2 * params.H + params.Hstar - 1) / 2)


def sites(m: int):
    """Reachable sites as arrays ``(j, s)``, ordered by ``j`` then ``s``."""
    js, ss = [], []
    for j in range(1, m + 1):
        for s in range(-j, j + 1, 2):
            js.append(j)
            ss.append(s)
    return np.array(js), np.array(ss)


def _site_cov(js, ss, params):
    return (gamma_corr(js[:, None] - js[None, :], params.H)
            * gamma_corr(ss[:, None] // 2 - ss[None, :] // 2, params.Hstar))


@lru_cache(maxsize=32)
def _dense_factor(m: int, params: ModelParams):
    js, ss = sites(m)
    L = _cholesky_with_jitter(_site_cov(js, ss, params), "environment")
    L.setflags(write=False)
    return L


@lru_cache(maxsize=1024)
def _slice_factor(j: int, Hstar: float):
    s = np.arange(-j, j + 1, 2)
    c = s // 2
    L = _cholesky_with_jitter(gamma_corr(c[:, None] - c[None, :], Hstar), "environment slice")
    L.setflags(write=False)
    return L


def sample_env_batch(m: int, params: ModelParams, seeds: Sequence[int]) -> np.ndarray:
    """Environments for several seeds, shape ``(len(seeds), m, 2m + 1)``."""
    if m < 1:
        raise ValidationError("m must be positive")
    js, ss = sites(m)
    out = np.zeros((len(seeds), m, 2 * m + 1))
    z = np.stack([make_rng(seed).standard_normal(len(js)) for seed in seeds]) if len(seeds) else np.zeros((0, len(js)))
    if params.white_time:
        # independent time slices: factor each slice on its own
        start = 0
        for j in range(1, m + 1):
            L = _slice_factor(j, params.Hstar)
            stop = start + j + 1
            out[:, j - 1, m - j:m + j + 1:2] = z[:, start:stop] @ L.T
            start = stop
    else:
        vals = z @ _dense_factor(m, params).T
        out[:, js - 1, ss + m] = vals
    return out


def sample_env(m: int, params: ModelParams, seed: int) -> PolymerEnv:
    """Exact Gaussian environment on the reachable sites; deterministic in ``seed``."""
    return PolymerEnv(m, sample_env_batch(m, params, [seed])[0], int(seed))


def _path_var(steps, params):
    """``Var^omega(sum_j omega(j, S_j))`` per path."""
    m = steps.shape[1]
    if params.white_time:
        return np.full(len(steps), float(m))
    pos = np.cumsum(steps, axis=1, dtype=np.int64)
    c = pos // 2
    tg = gamma_corr(np.arange(m)[:, None] - np.arange(m)[None, :], params.H)
    out = np.empty(len(steps))
    for lo in range(0, len(steps), 1024):
        cc = c[lo:lo + 1024]
        out[lo:lo + 1024] = np.einsum("pij,ij->p", gamma_corr(cc[:, :, None] - cc[:, None, :], params.Hstar), tg)
    return out


def _bridge_pref(m):
    return 0.5 * math.sqrt(m) * srw_pmf(m, tau(m))


def partition_batch(values: np.ndarray, variant: str, params: ModelParams, backend: str = "auto") -> np.ndarray:
    """Partition functions for a stack of environments ``values[b, j-1, s+m]``."""
    if variant not in ("free", "bridge"):
        raise ValidationError(f"variant must be 'free' or 'bridge', got {variant!r}")
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    B, m, width = values.shape
    if width != 2 * m + 1:
        raise ValidationError("environment array must have shape (m, 2m + 1)")
    k = kappa(m, params)
    if backend == "auto":
        backend = "transfer" if params.white_time else "enumerate"
    end = tau(m)
    if backend == "transfer":
        if not params.white_time:
            raise ValidationError("transfer backend requires H = 1/2")
        prob = np.zeros((B, 2 * m + 1))
        prob[:, m] = 1.0
        for j in range(1, m + 1):
            nxt = np.zeros_like(prob)
            nxt[:, 1:] += 0.5 * prob[:, :-1]
            nxt[:, :-1] += 0.5 * prob[:, 1:]
            with np.errstate(over="ignore"):
                fac = np.exp(k * values[:, j - 1, :] - 0.5 * k * k)
            prob = nxt * fac
        if variant == "free":
            out = prob.sum(axis=1)
        else:
            out = 0.5 * math.sqrt(m) * prob[:, end + m]
    elif backend == "enumerate":
        if m > MAX_ENUMERATION_STEPS:
            raise CapacityError(f"enumeration is capped at m={MAX_ENUMERATION_STEPS}")
        steps = step_array(m) if variant == "free" else bridge_step_array(m, end)
        pos = np.cumsum(steps, axis=1, dtype=np.int64)
        v = _path_var(steps, params)
        x = values[:, np.arange(m)[None, :], pos + m].sum(axis=2)
        with np.errstate(over="ignore"):
            f = np.exp(k * x - 0.5 * k * k * v[None, :])
        out = f.mean(axis=1)
        if variant == "bridge":
            out = _bridge_pref(m) * out
    else:
        raise ValidationError(f"unknown backend {backend!r}")
    _note_overflow(out)
    return out


def partition(env: PolymerEnv, variant: str, params: ModelParams, backend: str = "auto") -> float:
    """Wick-renormalised partition function, free or pinned at ``tau(m)``."""
    return float(partition_batch(env.values[None], variant, params, backend)[0])


def partition_samples(m: int, params: ModelParams, variant: str, seeds: Sequence[int], chunk: int = 256) -> np.ndarray:
    """Partition functions over independent environments, one per seed."""
    seeds = list(seeds)
    out = np.empty(len(seeds))
    for lo in range(0, len(seeds), chunk):
        vals = sample_env_batch(m, params, seeds[lo:lo + chunk])
        out[lo:lo + chunk] = partition_batch(vals, variant, params)
    return out


def match_moments(m: int, params: ModelParams, variant: str = "free"):
    """``(E[Z_m^2], E[u_{1/m}(m, 0)^2])`` computed by two independent routes."""
    if m > _PAIR_LIMIT:
        raise CapacityError(f"double enumeration is capped at m={_PAIR_LIMIT}")
    k = kappa(m, params)
    end = tau(m)
    steps = step_array(m) if variant == "free" else bridge_step_array(m, end)
    js, ss = sites(m)
    index = {(j, s): i for i, (j, s) in enumerate(zip(js, ss))}
    pos = np.cumsum(steps, axis=1, dtype=np.int64)
    visit = np.array([[index[(j + 1, int(p))] for j, p in enumerate(row)] for row in pos])
    cov = _site_cov(js, ss, params)
    # rows[p, :] = sum_j cov[site_j(p), :]
    rows = cov[visit].sum(axis=1)
    total = 0.0
    for lo in range(0, len(visit), 512):
        q = np.zeros((min(512, len(visit) - lo), len(visit)))
        for j in range(m):
            q += rows[lo:lo + 512][:, visit[:, j]]
        total += np.exp(k * k * q).sum()
    lhs = total / len(visit) ** 2
    if variant == "bridge":
        lhs *= _bridge_pref(m) ** 2
    req = SolveRequest("flat" if variant == "free" else "delta", m, 0, "enumerate")
    rhs = pair_moment(req, req, params.with_h(1.0 / m))
    return float(lhs), float(rhs)


def wasserstein_p(a, b, p: float = 2.0) -> float:
    """Empirical 1-d Wasserstein distance via the quantile coupling.

    Unequal sample sizes are handled exactly by merging the two quantile
    step functions.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValidationError("samples must be non-empty")
    if p < 1:
        raise ValidationError("p must be at least 1")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b) ** p) ** (1.0 / p))
    cuts = np.union1d(np.arange(1, a.size) / a.size, np.arange(1, b.size) / b.size)
    u = np.concatenate([[0.0], cuts, [1.0]])
    mid = 0.5 * (u[1:] + u[:-1])
    qa = a[np.minimum((mid * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mid * b.size).astype(int), b.size - 1)]
    return float(np.sum(np.diff(u) * np.abs(qa - qb) ** p) ** (1.0 / p))

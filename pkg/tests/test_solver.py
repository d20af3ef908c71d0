import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pamfk.errors import CapacityError, ValidationError, WindowError
from pamfk.noise import ModelParams, NoiseGrid, sample_field, sample_values, wh_covariance
from pamfk.solver import (
    SolveRequest,
    delta_prefactor,
    pair_moment,
    pair_moment_estimate,
    path_statistics,
    required_window,
    saturation_count,
    solve,
    solve_estimate,
    solve_values,
    wick_exp,
)
from pamfk.walk import WalkPath, srw_pmf, tau

WHITE = ModelParams(0.5, 0.5, 0.25)


def _grid(params, m, n, seed):
    M, lo, hi = required_window(m, n)
    return sample_field(params, M, lo, hi, seed)


def test_wick_exp():
    assert wick_exp(0.0, 0.0) == 1.0
    assert wick_exp(1.0, 2.0) == 1.0
    with pytest.raises(ValidationError):
        wick_exp(0.0, -1.0)


def test_wick_exp_saturation_is_counted():
    before = saturation_count()
    with pytest.warns(RuntimeWarning):
        out = wick_exp(1e4, 0.0)
    assert out == math.inf and saturation_count() == before + 1


def test_request_validation():
    with pytest.raises(ValidationError):
        SolveRequest("bump", 2, 0)
    with pytest.raises(ValidationError):
        SolveRequest("flat", 0, 0)
    with pytest.raises(ValidationError):
        SolveRequest("flat", 2, 0, "gpu")


def test_flat_m1_zero_noise():
    for p in (WHITE, ModelParams(0.75, 0.75, 1.0)):
        g = NoiseGrid(p, -1, 0, np.zeros((1, 2)))
        v1 = wh_covariance(0, 0, p)
        assert solve(SolveRequest("flat", 1, 0), g) == pytest.approx(math.exp(-v1 / 2), rel=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_flat_m1_two_cells(a, b):
    g = NoiseGrid(WHITE, -1, 0, np.array([[a, b]]))
    v1 = wh_covariance(0, 0, WHITE)
    expected = 0.5 * (math.exp(a - v1 / 2) + math.exp(b - v1 / 2))
    for backend in ("enumerate", "transfer"):
        assert solve(SolveRequest("flat", 1, 0, backend), g) == pytest.approx(expected, rel=1e-14)


def test_delta_vanishing_prefactor():
    # 2n - tau(m) out of range for m = 2, n = 3
    g = _grid(WHITE, 2, 3, 0)
    assert delta_prefactor(2, 3, 0.25) == 0.0
    assert solve(SolveRequest("delta", 2, 3), g) == 0.0


def test_delta_prefactor_value():
    assert delta_prefactor(3, 1, 0.25) == srw_pmf(3, 2 - tau(3))


def test_path_statistics():
    p = ModelParams(0.75, 0.6, 0.5)
    g = _grid(p, 3, 0, 5)
    x, v = path_statistics(WalkPath((1, -1, 1)), g, 0)
    # slab 1 <- step 3, position 1; slab 2 <- position 0; slab 3 <- position 1
    assert x == pytest.approx(g.at(1, 0) + g.at(2, 0) + g.at(3, 0))
    c = [0, 0, 0]
    expected = sum(wh_covariance(i - j, c[i] - c[j], p) for i in range(3) for j in range(3))
    assert v == pytest.approx(expected)


def test_window_errors():
    g = sample_field(WHITE, 2, 0, 1, 0)
    with pytest.raises(WindowError):
        solve(SolveRequest("flat", 3, 0), g)
    with pytest.raises(WindowError):
        solve(SolveRequest("flat", 2, 0), g)


def test_capacity_error():
    with pytest.raises(CapacityError):
        solve(SolveRequest("flat", 25, 0), _grid(WHITE, 25, 0, 0))


def test_transfer_requires_white_time():
    p = ModelParams(0.75, 0.5, 0.25)
    with pytest.raises(ValidationError):
        solve(SolveRequest("flat", 2, 0, "transfer"), _grid(p, 2, 0, 0))


@pytest.mark.parametrize("Hs", [0.5, 0.75])
@pytest.mark.parametrize("ic", ["flat", "delta"])
def test_backend_equivalence(Hs, ic):
    p = ModelParams(0.5, Hs, 0.25)
    for m in (1, 4, 9):
        for n in (0, 1):
            M, lo, hi = required_window(m, n)
            vals = sample_values(p, M, lo, hi, range(10))
            a, _ = solve_values(SolveRequest(ic, m, n, "enumerate"), vals, lo, p)
            b, _ = solve_values(SolveRequest(ic, m, n, "transfer"), vals, lo, p)
            assert np.max(np.abs(a - b)) <= 1e-10


def test_positivity():
    p = ModelParams(0.75, 0.75, 0.25)
    vals = sample_values(p, 6, -3, 3, range(50))
    flat, _ = solve_values(SolveRequest("flat", 6, 0), vals, -3, p)
    delta, _ = solve_values(SolveRequest("delta", 6, 0), vals, -3, p)
    assert np.all(flat > 0) and np.all(delta > 0)


@pytest.mark.parametrize("ic", ["flat", "delta"])
def test_montecarlo_consistency(ic):
    p = ModelParams(0.75, 0.6, 0.25)
    g = _grid(p, 10, 0, 3)
    exact = solve(SolveRequest(ic, 10, 0), g)
    est = solve_estimate(SolveRequest(ic, 10, 0, "montecarlo", paths=100_000, seed=11), g)
    assert abs(est.value - exact) < 4 * est.se


def test_montecarlo_is_seeded():
    g = _grid(WHITE, 6, 0, 1)
    r = SolveRequest("flat", 6, 0, "montecarlo", paths=1000, seed=4)
    assert solve(r, g) == solve(r, g)


@pytest.mark.parametrize("ic", ["flat", "delta"])
def test_noise_mean(ic):
    p = ModelParams(0.75, 0.6, 0.25)
    m, n = 6, 1
    M, lo, hi = required_window(m, n)
    vals = sample_values(p, M, lo, hi, range(4000))
    u, _ = solve_values(SolveRequest(ic, m, n), vals, lo, p)
    target = 1.0 if ic == "flat" else delta_prefactor(m, n, p.h)
    assert abs(u.mean() - target) < 3 * u.std(ddof=1) / math.sqrt(len(u))


def test_pair_moment_m1_example():
    r = SolveRequest("flat", 1, 0)
    v1 = wh_covariance(0, 0, WHITE)
    assert pair_moment(r, r, WHITE) == pytest.approx(0.5 * (math.exp(v1) + 1), rel=1e-14)


@pytest.mark.parametrize("Hs", [0.5, 0.75])
@pytest.mark.parametrize("ic", ["flat", "delta"])
def test_pair_transfer_equals_enumerate(Hs, ic):
    p = ModelParams(0.5, Hs, 0.25)
    for m in (1, 3, 6, 10):
        a = pair_moment(SolveRequest(ic, m, 0), SolveRequest(ic, m, 0), p)
        b = pair_moment(SolveRequest(ic, m, 0, "transfer"), SolveRequest(ic, m, 0, "transfer"), p)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_pair_moment_cross_resolution():
    coarse, fine = ModelParams(0.5, 0.75, 0.25), ModelParams(0.5, 0.75, 1 / 16)
    ra, rb = SolveRequest("flat", 4, 0), SolveRequest("flat", 16, 0, "transfer")
    a = pair_moment(SolveRequest("flat", 4, 0, "transfer"), rb, coarse, fine)
    b = pair_moment(ra, SolveRequest("flat", 16, 0), coarse, fine)
    assert a == pytest.approx(b, rel=1e-10)


def test_pair_moment_at_least_mean_square():
    p = ModelParams(0.75, 0.75, 0.25)
    r = SolveRequest("flat", 5, 0)
    assert pair_moment(r, r, p) >= 1.0
    rd = SolveRequest("delta", 5, 0)
    assert pair_moment(rd, rd, p) >= delta_prefactor(5, 0, p.h) ** 2


def test_pair_moment_validation():
    r = SolveRequest("flat", 2, 0)
    with pytest.raises(ValidationError):
        pair_moment(r, r, ModelParams(0.5, 0.5, 0.25), ModelParams(0.5, 0.75, 0.25))
    with pytest.raises(ValidationError):
        pair_moment(r, r, ModelParams(0.5, 0.5, 0.25), ModelParams(0.5, 0.5, 0.125))
    with pytest.raises(CapacityError):
        pair_moment(SolveRequest("flat", 15, 0), SolveRequest("flat", 15, 0), ModelParams(0.75, 0.5, 0.25))


def test_pair_montecarlo_consistent():
    p = ModelParams(0.75, 0.6, 0.25)
    r = SolveRequest("flat", 8, 0)
    exact = pair_moment(r, r, p)
    rm = SolveRequest("flat", 8, 0, "montecarlo", paths=200_000, seed=2)
    est = pair_moment_estimate(rm, rm, p)
    assert abs(est.value - exact) < 4 * est.se


def test_sample_variance_matches_second_moment():
    p = ModelParams(0.5, 0.75, 0.25)
    m = 5
    M, lo, hi = required_window(m, 0)
    vals = sample_values(p, M, lo, hi, range(10000))
    u, _ = solve_values(SolveRequest("flat", m, 0, "transfer"), vals, lo, p)
    var = pair_moment(SolveRequest("flat", m, 0), SolveRequest("flat", m, 0), p) - 1.0
    d = (u - u.mean()) ** 2
    assert abs(u.var(ddof=1) - var) < 3 * d.std(ddof=1) / math.sqrt(len(u))

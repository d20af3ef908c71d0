import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from pamfk.analysis import (
    _exact_err2,
    _mc_err2,
    density_gap,
    estimate_order,
    fit_loglog,
    holder_scan,
    llt_error,
    llt_errors,
    rate_study,
    theory_slope,
)
from pamfk.chaos import heat_kernel
from pamfk.errors import ValidationError
from pamfk.noise import ModelParams
from pamfk.walk import lattice_floor, srw_pmf, tau


def test_llt_examples():
    assert llt_error(2) == pytest.approx(abs(0.5 - 1 / math.sqrt(math.pi)), abs=1e-15)
    assert np.all(llt_errors(range(1, 50)) >= 0)
    with pytest.raises(ValidationError):
        llt_error(0)


def test_llt_scaled_error_bounded():
    ms = np.unique(np.geomspace(2, 4096, 300).astype(int))
    assert np.max(ms * llt_errors(ms)) <= 0.13


def test_estimate_order_examples():
    assert estimate_order([(1, 3), (0.25, 0.75)])[0] == pytest.approx(1.0, abs=1e-15)
    assert estimate_order([(1, 2.5), (0.25, 2.5)])[0] == 0.0
    assert estimate_order([(1, 2.0), (0.25, 1.0), (1 / 16, 0.5)])[0] == pytest.approx(0.5, abs=1e-12)


@given(st.floats(-2, 3), st.floats(-5, 5), st.permutations(range(5)))
def test_synthetic_power_law(slope, c, perm):
    h = 4.0 ** -np.arange(5)
    pairs = [(float(a), float(math.exp(c) * a ** slope)) for a in h]
    s, i = estimate_order([pairs[j] for j in perm])
    assert s == pytest.approx(slope, abs=1e-12)
    assert i == pytest.approx(c, abs=1e-10)


def test_estimate_order_degenerate():
    with pytest.raises(ValidationError):
        estimate_order([(1, 1)])
    with pytest.raises(ValidationError):
        estimate_order([(1, 1), (1, 2)])
    with pytest.raises(ValidationError):
        estimate_order([(1, 0), (0.5, 2)])


def test_fit_loglog_standard_error():
    rng = np.random.default_rng(1)
    h = 4.0 ** -np.arange(6)
    e = h ** 0.7 * np.exp(0.05 * rng.standard_normal(6))
    slope, _, se = fit_loglog(h, e)
    assert se > 0 and abs(slope - 0.7) < 4 * se


def test_theory_slope():
    assert theory_slope(ModelParams(0.5, 0.5)) == 0.5
    assert theory_slope(ModelParams(0.5, 0.75)) == 0.75
    assert theory_slope(ModelParams(0.75, 0.75)) == 1.0


def _white_gap_oracle(t, h, x=0.0):
    p = ModelParams(0.5, 0.5, h)
    dx = p.space_step
    m, n = lattice_floor(t, h), lattice_floor(x, dx)

    def lattice(y):
        c = math.floor(y / dx)
        return srw_pmf(m, 2 * (n - c) - tau(m)) / dx

    edges = (np.arange(n - m - 4, n + m + 6)) * dx
    sq = lambda y: (lattice(y) - heat_kernel(t, x - y)) ** 2
    total = sum(integrate.quad(sq, a, b, epsabs=1e-14, epsrel=1e-12)[0] for a, b in zip(edges, edges[1:]))
    tails = integrate.quad(sq, -np.inf, edges[0])[0] + integrate.quad(sq, edges[-1], np.inf)[0]
    return total + tails


@pytest.mark.parametrize("t,h", [(0.1, 0.25), (0.25, 0.25), (1.0, 0.25), (1.0, 1 / 16), (4.0, 1 / 16), (0.7, 1 / 64)])
def test_density_gap_white_matches_quadrature(t, h):
    assert density_gap(t, ModelParams(0.5, 0.5, h)) == pytest.approx(_white_gap_oracle(t, h), abs=1e-7)


def test_density_gap_below_one_step():
    # t < h: a single cell of height 1/dx against the heat kernel
    p = ModelParams(0.5, 0.5, 0.25)
    t = 0.1
    cdf = 0.5 * (math.erf(1 / math.sqrt(2 * t)) - math.erf(0.0))
    expected = 1.0 - 2.0 * cdf + 1 / (2 * math.sqrt(math.pi * t))
    assert density_gap(t, p) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("Hs", [0.5, 0.75])
@pytest.mark.parametrize("sign", [-1, 1])
def test_density_gap_lattice_shift_invariant(Hs, sign):
    p = ModelParams(0.5, Hs, 1 / 16)
    base = density_gap(1.3, p, 0.1, sign)
    assert density_gap(1.3, p, 0.1 + 3 * p.space_step, sign) == pytest.approx(base, rel=1e-10)


@pytest.mark.parametrize("HH", [(0.5, 0.5), (0.5, 0.75), (0.75, 0.75)])
def test_density_gap_decreases_under_refinement(HH):
    for t in (0.25, 1.0, 4.0):
        vals = [density_gap(t, ModelParams(*HH, 4.0 ** -l)) for l in range(1, 5)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_density_gap_white_scaled_bounded():
    eps = 0.05
    scaled = [density_gap(t, ModelParams(0.5, 0.5, 4.0 ** -l)) * t ** (1 - eps) / (4.0 ** -l) ** (0.5 - eps)
              for t in (0.25, 1.0, 4.0) for l in range(1, 5)]
    assert max(scaled) < 0.1


def test_density_gap_validation():
    with pytest.raises(ValidationError):
        density_gap(0.0, ModelParams())
    with pytest.raises(ValidationError):
        density_gap(1.0, ModelParams(), sign=0)


def test_rate_study_report_shape():
    rep = rate_study("flat", ModelParams(0.5, 0.5, 1.0), 4)
    assert [r.h for r in rep.levels] == [1.0, 0.25, 1 / 16]
    assert rep.reference_h == 1 / 64 and rep.theory_slope == 0.5
    assert all(r.err2 > 0 and r.method == "ExactPair" for r in rep.levels)
    assert math.isfinite(rep.slope)


def test_rate_study_validation():
    p = ModelParams(0.5, 0.5, 1.0)
    with pytest.raises(ValidationError):
        rate_study("flat", p, 2)
    with pytest.raises(ValidationError):
        rate_study("flat", p, 4, method="richardson")
    with pytest.raises(ValidationError):
        rate_study("flat", p, 0, levels=[1, 0.25], reference_h=0.25)


@pytest.mark.parametrize("ic", ["flat", "delta"])
@pytest.mark.parametrize("Hs", [0.5, 0.75])
def test_rate_exact_and_montecarlo_agree(ic, Hs):
    p = ModelParams(0.5, Hs, 1.0)
    ex = rate_study(ic, p, 0, levels=[1, 0.25], reference_h=1 / 16)
    mc = rate_study(ic, p, 0, levels=[1, 0.25], reference_h=1 / 16, method="montecarlo", paths=50_000, seed=5)
    for a, b in zip(ex.levels, mc.levels):
        assert abs(a.err2 - b.err2) < 3 * b.se
    assert mc.slope_se > 0


@pytest.mark.parametrize("ic", ["flat", "delta"])
def test_colored_time_exact_and_montecarlo_agree(ic):
    p = ModelParams(0.75, 0.75, 1.0)
    exact = _exact_err2(ic, p, 1.0, 0.25, 1.0, 0.0)
    mc, se = _mc_err2(ic, p, 1.0, 0.25, 1.0, 0.0, 50_000, 9)
    assert abs(mc - exact) < 3 * se


def test_holder_scan():
    p = ModelParams(0.5, 0.75, 1 / 16)
    scan = holder_scan(p, [1.0, 1.0, 1.0625, 1.25, 1.5], [0.0, 0.0, 0.5, 1.0, 2.0], range(300))
    zero = [r for r in scan.rows if r[1] == 0]
    assert len(zero) == 2 and all(r[2] == 0.0 and r[3] == 0.0 for r in zero)
    assert all(r[2] > 0 for r in scan.rows if r[1] > 0)
    for est, se in ((scan.time_exponent, scan.time_exponent_se), (scan.space_exponent, scan.space_exponent_se)):
        assert math.isfinite(est) and math.isfinite(se) and se > 0


def test_holder_scan_validation():
    with pytest.raises(ValidationError):
        holder_scan(ModelParams(), [1.0, 2.0], [0.0, 1.0], [1])

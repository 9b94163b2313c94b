from fractions import Fraction
import math

from hypothesis import given, settings, strategies as st
import pytest

from randwave.errors import ExponentInfeasibleError, NotApplicableError, UnsupportedDimensionError
from randwave.exponents import (a_interval, derive_exponents, exponents_json, masaki_feasible, scaling_index,
                                strauss_exponent, validate_exponents)


def test_strauss_exponent_closed_forms():
    assert strauss_exponent(1) == pytest.approx((1 + math.sqrt(17)) / 2, abs=1e-15)
    assert strauss_exponent(2) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert strauss_exponent(3) == 1.0


@pytest.mark.parametrize("d", [0, 4, 7])
def test_unsupported_dimension(d):
    with pytest.raises(UnsupportedDimensionError):
        strauss_exponent(d)


D1P3 = {"r": Fraction(5), "q": Fraction(30, 7), "qbar": Fraction(15), "s_c": Fraction(-1, 6),
        "eps0": Fraction(1, 15), "rho0": Fraction(3), "a": Fraction(20, 3), "b": Fraction(5),
        "alpha": Fraction(20, 17), "beta": Fraction(5, 4)}
D2P15 = {"r": Fraction(7, 2), "q": Fraction(21, 8), "qbar": Fraction(21), "s_c": Fraction(-1, 3),
         "eps0": Fraction(1, 21), "rho0": Fraction(3), "a": Fraction(4), "b": Fraction(4)}
D3P12 = {"r": Fraction(16, 5), "q": Fraction(96, 35), "qbar": Fraction(96, 19), "s_c": Fraction(-1, 6),
         "eps0": Fraction(19, 96), "rho0": Fraction(9, 4)}


@pytest.mark.parametrize("d,p,table", [(1, 3.0, D1P3), (3, 1.2, D3P12)])
def test_rational_tables(d, p, table):
    es = derive_exponents(d, p)
    for key, want in table.items():
        assert getattr(es, key) == pytest.approx(float(want), abs=1e-12), key


def test_inv_a_override_gives_fixed_pair():
    es = derive_exponents(2, 1.5, inv_a=0.25)
    for key, want in D2P15.items():
        assert getattr(es, key) == pytest.approx(float(want), abs=1e-12), key
    assert validate_exponents(es).passed
    with pytest.raises(ExponentInfeasibleError):
        derive_exponents(2, 1.5, inv_a=0.9)


def test_midpoint_set_has_zero_residuals():
    assert validate_exponents(derive_exponents(1, 3.0)).max_residual <= 4e-16


def test_d3_midpoint_dual_pair_equals_ab():
    es = derive_exponents(3, 1.2)
    assert 1 / (1 - 1 / es.alpha) == pytest.approx(es.a, rel=1e-12)
    assert 1 / (1 - 1 / es.beta) == pytest.approx(es.b, rel=1e-12)


@pytest.mark.parametrize("d,p", [(1, 3.0), (2, 1.5), (3, 1.2)])
def test_dual_pair_is_admissible(d, p):
    es = derive_exponents(d, p)
    alpha_d, beta_d = 1 / (1 - 1 / es.alpha), 1 / (1 - 1 / es.beta)
    assert scaling_index(d, alpha_d, beta_d) == pytest.approx(0.0, abs=1e-12)
    assert scaling_index(d, es.a, es.b) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d,p", [(1, 2.0), (1, 4.5), (2, 1.4), (2, 2.0), (3, 1.0), (3, 4 / 3)])
def test_outside_window_is_infeasible(d, p):
    with pytest.raises(ExponentInfeasibleError):
        derive_exponents(d, p)


@st.composite
def admissible(draw):
    d = draw(st.sampled_from([1, 2, 3]))
    lo, hi = strauss_exponent(d), 4 / d
    t = draw(st.floats(0.001, 0.999))
    frac = draw(st.floats(0.05, 0.95))
    return d, lo + t * (hi - lo), frac


@settings(max_examples=300, deadline=None)
@given(admissible())
def test_identities_hold_across_window(case):
    d, p, frac = case
    rep = validate_exponents(derive_exponents(d, p, a_fraction=frac))
    assert rep.passed, rep.failures()
    assert rep.max_residual <= 1e-12


@settings(max_examples=200, deadline=None)
@given(admissible())
def test_critical_pair_has_critical_index(case):
    d, p, _ = case
    es = derive_exponents(d, p)
    assert scaling_index(d, es.q, es.r) == pytest.approx(es.s_c, abs=1e-12)
    assert es.eps0 > 0 and es.s_c < 0
    lo, hi = a_interval(d, p, es.q)
    assert lo < 1 / es.a < hi


def test_corrupted_set_fails_validation():
    es = derive_exponents(1, 3.0)
    bad = type(es)(**{**es.as_dict(), "q": es.q + 1e-3})
    rep = validate_exponents(bad)
    assert not rep.passed
    assert not rep["critical_scaling"].passed


@pytest.mark.parametrize("d", [1, 2, 3])
def test_eps0_vanishes_at_strauss_endpoint(d):
    p0, p1 = strauss_exponent(d), 4 / d
    ps = [p0 + (p1 - p0) * s for s in (0.5, 0.1, 0.01, 0.001)]
    eps = [derive_exponents(d, p).eps0 for p in ps]
    qbar = [derive_exponents(d, p).qbar for p in ps]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert eps[-1] < 0.01
    assert all(a < b for a, b in zip(qbar, qbar[1:]))


def test_masaki_constraints():
    assert masaki_feasible(derive_exponents(3, 1.33)) is True
    assert masaki_feasible(derive_exponents(3, 1.2)) is True
    # close to the Strauss endpoint the pair leaves the admissible region
    assert masaki_feasible(derive_exponents(3, 1.05)) is False
    with pytest.raises(NotApplicableError):
        masaki_feasible(derive_exponents(2, 1.5))


def test_json_keys():
    out = exponents_json(derive_exponents(1, 3.0))
    assert set(out) == {"d", "p", "p0", "r", "q", "qbar", "s_c", "eps0", "rho0", "a", "b", "alpha", "beta",
                        "feasible_masaki"}
    assert out["feasible_masaki"] is None

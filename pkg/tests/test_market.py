import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskport.errors import DomainError, ModelError, NumericError
from riskport.market import (CoefficientCurve, MarketModel, deflator_law, expect_deflator,
                             gauss_hermite, theta)

from conftest import SQRT_H_MEAN


def test_theta_scalar():
    m = MarketModel.constant(0.02, [0.06], [[0.2]])
    assert theta(m, 0.5) == pytest.approx([0.2], abs=1e-15)


def test_theta_zero_excess():
    m = MarketModel.constant(0.03, [0.03, 0.03], [[0.2, 0.0], [0.1, 0.3]])
    assert np.all(theta(m, 0.3) == 0.0)


def test_theta_two_assets_forward_substitution():
    m = MarketModel.constant(0.0, [0.04, 0.05], [[0.2, 0.0], [0.1, 0.3]])
    assert theta(m, 0.0) == pytest.approx([0.2, 0.1], abs=1e-14)


def test_theta_rectangular_is_minimal_norm():
    m = MarketModel.constant(0.02, [0.06], [[0.2, 0.0]])
    assert theta(m, 0.1) == pytest.approx([0.2, 0.0], abs=1e-14)
    assert not m.is_complete


def test_singular_vol_rejected_with_time():
    vol = CoefficientCurve([0.0, 0.5, 1.0], [[[0.2]], [[0.0]], [[0.2]]])
    rate = CoefficientCurve.constant(0.02, 1.0)
    drift = CoefficientCurve.constant([0.06], 1.0)
    with pytest.raises(ModelError, match="t=0.5"):
        MarketModel(1.0, rate, drift, vol)


def test_breakpoints_must_span_horizon():
    with pytest.raises(ModelError):
        MarketModel(1.0, CoefficientCurve([0.0, 0.5], [0.02, 0.02]),
                    CoefficientCurve.constant([0.06], 1.0), CoefficientCurve.constant([[0.2]], 1.0))
    with pytest.raises(ModelError):
        CoefficientCurve([0.0, 0.0], [1.0, 2.0])


def test_curve_is_piecewise_linear():
    c = CoefficientCurve([0.0, 0.5, 1.0], [0.0, 1.0, 3.0])
    assert c(0.25) == pytest.approx(0.5)
    assert c(0.75) == pytest.approx(2.0)


def test_deflator_law_constant_market(market):
    law = deflator_law(market, 0.0, 1.0)
    assert law.mean == pytest.approx(-0.065, abs=1e-13)
    assert law.variance == pytest.approx(0.09, abs=1e-13)


def test_deflator_law_degenerate_and_empty(degenerate, market):
    law = deflator_law(degenerate, 0.0, 1.0)
    assert (law.mean, law.variance) == (0.0, 0.0)
    assert deflator_law(market, 0.4, 0.4) == deflator_law(degenerate, 0.1, 0.1)
    with pytest.raises(DomainError):
        deflator_law(market, 0.6, 0.2)


def test_expect_deflator_examples(market):
    assert expect_deflator(market, 0.0, 1.0, lambda h: np.ones_like(h)) == pytest.approx(1.0, abs=1e-14)
    assert expect_deflator(market, 0.0, 1.0, lambda h: h) == pytest.approx(math.exp(-0.02), rel=1e-13)
    assert expect_deflator(market, 0.0, 1.0, np.sqrt) == pytest.approx(SQRT_H_MEAN, rel=1e-13)
    assert SQRT_H_MEAN == pytest.approx(math.exp(-0.02125), rel=1e-15)


def test_expect_deflator_rejects_non_finite(market):
    with pytest.raises(NumericError):
        expect_deflator(market, 0.0, 1.0, lambda h: np.where(h > 1.0, np.inf, h))


def _varying_market():
    bp = [0.0, 0.3, 0.7, 1.0]
    rate = CoefficientCurve(bp, [0.01, 0.03, 0.02, 0.05])
    drift = CoefficientCurve(bp, [[0.05, 0.04], [0.09, 0.06], [0.03, 0.08], [0.07, 0.05]])
    vol = CoefficientCurve(bp, [[[0.2, 0.0], [0.05, 0.25]], [[0.3, 0.1], [0.0, 0.2]],
                                [[0.25, 0.0], [0.1, 0.3]], [[0.2, 0.05], [0.05, 0.2]]])
    return MarketModel(1.0, rate, drift, vol)


VARYING = _varying_market()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_deflator_law_additive(a, b, c):
    t, u, s = sorted((a, b, c))
    whole = deflator_law(VARYING, t, s)
    left, right = deflator_law(VARYING, t, u), deflator_law(VARYING, u, s)
    assert left.variance + right.variance == pytest.approx(whole.variance, abs=1e-12)
    assert left.mean + right.mean == pytest.approx(whole.mean, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_deflator_is_a_discount_martingale(a, b):
    t, s = sorted((a, b))
    got = expect_deflator(VARYING, t, s, lambda h: h)
    assert got == pytest.approx(VARYING.discount(t, s), abs=1e-10)


def test_variance_matches_independent_integral():
    from scipy.integrate import quad
    ref, _ = quad(VARYING.theta_sq, 0.1, 0.9, points=[0.3, 0.7], epsabs=1e-14)
    assert deflator_law(VARYING, 0.1, 0.9).variance == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("payoff", [np.sqrt, lambda h: h**2, lambda h: 1 / (1 + h), np.log1p])
def test_quadrature_node_doubling(market, payoff):
    a = expect_deflator(market, 0.0, 1.0, payoff, nodes=64)
    b = expect_deflator(market, 0.0, 1.0, payoff, nodes=128)
    assert abs(a - b) < 1e-9


def test_gauss_hermite_weights_normalised():
    z, w = gauss_hermite(128)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert (w * z**2).sum() == pytest.approx(1.0, abs=1e-13)

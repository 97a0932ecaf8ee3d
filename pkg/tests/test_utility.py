import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskport.errors import DomainError
from riskport.utility import (UtilitySpec, default_wealth_grid, make_crra, make_crra_mixture,
                              make_log, more_risk_averse, perturb_epsilon, scale_utility,
                              validate)

GRID = default_wealth_grid()


def test_crra_examples():
    assert make_crra(1.0).inverse_marginal(4.0) == pytest.approx(0.25)
    assert make_crra(2.0).inverse_marginal(0.25) == pytest.approx(2.0)
    assert make_crra(2.0).art(3.0) == pytest.approx(1.5)
    assert make_log().label == "log"
    with pytest.raises(DomainError):
        make_crra(0.0)


def test_mixture_examples():
    single = make_crra_mixture([1.0], [2.0])
    crra = make_crra(2.0)
    np.testing.assert_allclose(single.marginal(GRID), crra.marginal(GRID), rtol=1e-14)
    np.testing.assert_allclose(single.art(GRID), crra.art(GRID), rtol=1e-14)
    y = crra.marginal(GRID)
    np.testing.assert_allclose(single.inverse_marginal(y), GRID, rtol=1e-12)

    mix = make_crra_mixture([1.0, 1.0], [1.0, 3.0])
    assert mix.marginal(1.0) == pytest.approx(2.0)
    assert mix.inverse_marginal(2.0) == pytest.approx(1.0, rel=1e-13)
    assert np.all(mix.art(GRID) >= GRID / 3 * (1 - 1e-14))
    with pytest.raises(DomainError):
        make_crra_mixture([1.0, -1.0], [1.0, 2.0])


def test_epsilon_perturbation_examples(catalog):
    crra = make_crra(2.0)
    assert perturb_epsilon(crra, 0.0) is crra
    pert = perturb_epsilon(crra, 0.5)
    np.testing.assert_allclose(pert.rra(GRID[:150]), 2.0 + 0.5 * GRID[:150], rtol=1e-14)
    for u in catalog.values():
        v = perturb_epsilon(u, 0.3)
        assert np.all(v.art(GRID) < u.art(GRID))


def test_epsilon_level_matches_base_at_one():
    base = make_crra(2.0)
    pert = perturb_epsilon(base, 0.5)
    assert pert.u(1.0) == pytest.approx(base.u(1.0), abs=1e-15)
    # central difference of the tabulated level recovers the marginal
    x = np.array([0.05, 0.7, 3.0, 12.0])
    h = 1e-5 * x
    d = (pert.u(x + h) - pert.u(x - h)) / (2 * h)
    np.testing.assert_allclose(d, pert.marginal(x), rtol=1e-6)


def test_more_risk_averse_examples(catalog):
    assert more_risk_averse(make_crra(3.0), make_crra(2.0), GRID).holds
    res = more_risk_averse(make_crra(2.0), make_crra(3.0), GRID)
    assert not res.holds and res.witness == GRID[0]
    for u in catalog.values():
        assert more_risk_averse(u, u, GRID).holds
        assert more_risk_averse(perturb_epsilon(u, 0.1), u, GRID).holds


def test_more_risk_averse_is_a_preorder(catalog):
    us = list(catalog.values())
    rel = [[more_risk_averse(a, b, GRID).holds for b in us] for a in us]
    n = len(us)
    for i in range(n):
        assert rel[i][i]
        for j in range(n):
            for k in range(n):
                if rel[i][j] and rel[j][k]:
                    assert rel[i][k]


@pytest.mark.parametrize("name,c", [("crra2", 0.5), ("log", 1.0), ("crra5", 0.2)])
def test_validate_passes_with_growth_constant(catalog, name, c):
    rep = validate(catalog[name])
    assert rep.passed, [k for k in rep.checks if not k.passed]
    assert rep.growth_c == pytest.approx(c, rel=1e-6)


@pytest.mark.parametrize("name", ["mixture", "eps_crra2"])
def test_validate_quadrature_utilities(catalog, name):
    assert validate(catalog[name]).passed


def test_validate_flags_weak_inada_for_low_gamma(catalog):
    rep = validate(catalog["crra0.5"])
    assert not rep["inada"].passed
    assert all(c.passed for c in rep.checks if c.name != "inada")


def test_validate_broken_spec_reports_concavity_witness():
    # U'(x) = 1/x + 0.5 sin(log x)/x^0.5 ... rises on part of the grid
    marg = lambda x: 1.0 / x * (1.5 + np.sin(3 * np.log(x)))
    second = lambda x: -marg(x) / x + 3 * np.cos(3 * np.log(x)) / x**2
    broken = UtilitySpec(u=np.log, marginal=marg, second=second, label="broken")
    rep = validate(broken, inverse_check=False) if "inverse_check" in validate.__code__.co_varnames \
        else validate(broken)
    conc = rep["concavity"]
    assert not conc.passed
    assert conc.witness is not None and conc.witness > 0


@pytest.mark.parametrize("name", ["log", "crra0.5", "crra2", "crra5", "mixture", "eps_crra2"])
def test_marginal_roundtrip(catalog, name):
    u = catalog[name]
    y = u.marginal(GRID)
    y = y[y > 1e-300]
    np.testing.assert_allclose(u.marginal(u.inverse_marginal(y)), y, rtol=1e-10)


@pytest.mark.parametrize("name", ["log", "crra2", "mixture", "eps_crra2"])
def test_inverse_derivative_identity(catalog, name):
    u = catalog[name]
    y = u.marginal(np.geomspace(0.01, 100, 30))
    h = 1e-5 * y
    d = (u.inverse_marginal(y + h) - u.inverse_marginal(y - h)) / (2 * h)
    np.testing.assert_allclose(d * u.second(u.inverse_marginal(y)), 1.0, rtol=1e-8)
    np.testing.assert_allclose(u.inverse_marginal_deriv(y) * u.second(u.inverse_marginal(y)), 1.0, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=3),
       st.lists(st.floats(0.3, 6.0), min_size=3, max_size=3),
       st.floats(1e-4, 1e4))
def test_mixture_inverse_property(weights, gammas, y):
    u = make_crra_mixture(weights, gammas[:len(weights)])
    x = u.inverse_marginal(y)
    assert u.marginal(x) == pytest.approx(y, rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 8.0), st.floats(0.05, 20.0))
def test_scaling_tolerance_property(gamma_scale, x):
    u = make_crra_mixture([1.0, 2.0], [1.5, 4.0])
    v = scale_utility(u, gamma_scale)
    assert v.art(x) == pytest.approx(u.art(gamma_scale * x) / gamma_scale, rel=1e-13)
    y = v.marginal(x)
    assert v.inverse_marginal(y) == pytest.approx(x, rel=1e-11)

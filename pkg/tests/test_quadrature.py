import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from stackbo.quadrature import gauss_hermite_rule, gaussian_expectation


def test_order_one():
    rule = gauss_hermite_rule(1)
    np.testing.assert_array_equal(rule.nodes, [0.0])
    np.testing.assert_array_equal(rule.weights, [1.0])


def test_order_two():
    rule = gauss_hermite_rule(2)
    np.testing.assert_allclose(rule.nodes, [-1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)
    assert gaussian_expectation(lambda t: t * t, 0.0, 1.0, rule) == pytest.approx(1.0, abs=1e-15)


def test_order_three():
    rule = gauss_hermite_rule(3)
    np.testing.assert_allclose(rule.nodes, [-np.sqrt(3), 0.0, np.sqrt(3)], atol=1e-14)
    np.testing.assert_allclose(rule.weights, [1 / 6, 2 / 3, 1 / 6], atol=1e-14)


def test_matches_numpy_hermgauss():
    # numpy's physicists' rule rescaled to the standard normal
    for K in (4, 10, 20, 50, 100):
        x, w = np.polynomial.hermite.hermgauss(K)
        rule = gauss_hermite_rule(K)
        np.testing.assert_allclose(rule.nodes, np.sqrt(2) * x, atol=1e-12)
        np.testing.assert_allclose(rule.weights, w / np.sqrt(np.pi), rtol=1e-10, atol=0)


@pytest.mark.parametrize("K", [0, 101, 2.5, True])
def test_invalid_order(K):
    with pytest.raises(ValueError):
        gauss_hermite_rule(K)


def test_rules_are_symmetric_and_normalized():
    for K in range(1, 101):
        rule = gauss_hermite_rule(K)
        np.testing.assert_array_equal(rule.nodes, -rule.nodes[::-1])
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(rule.weights > 0)


def test_degenerate_variance_and_linear():
    rule = gauss_hermite_rule(7)
    assert gaussian_expectation(np.exp, 0.4, 0.0, rule) == pytest.approx(np.exp(0.4), rel=1e-15)
    for mean, var in [(0.0, 1.0), (-3.2, 0.01), (5.0, 9.0)]:
        assert gaussian_expectation(lambda t: t, mean, var, rule) == pytest.approx(mean, abs=1e-12)


def test_errors():
    rule = gauss_hermite_rule(5)
    with pytest.raises(ValueError):
        gaussian_expectation(lambda t: t, 0.0, -1.0, rule)
    with pytest.raises(ValueError), np.errstate(all="ignore"):
        gaussian_expectation(lambda t: np.log(t), 0.0, 1.0, rule)


def _gauss_moment_by_integration(coef, mean, var):
    sd = np.sqrt(var)
    dens = lambda t: np.exp(-0.5 * ((t - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    val, _ = integrate.quad(lambda t: np.polyval(coef, t) * dens(t), mean - 40 * sd, mean + 40 * sd,
                            limit=400, epsabs=0, epsrel=1e-13)
    return val


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@settings(max_examples=60, deadline=None)
@given(K=st.sampled_from([2, 3, 5, 8]), seed=st.integers(0, 2**31 - 1))
def test_polynomial_exactness_against_integration(K, seed):
    rng = np.random.default_rng(seed)
    deg = int(rng.integers(0, 2 * K))
    coef = rng.standard_normal(deg + 1)
    mean, var = rng.normal(0, 1), rng.uniform(0.05, 2.0)
    got = gaussian_expectation(lambda t: np.polyval(coef, t), mean, var, gauss_hermite_rule(K))
    want = _gauss_moment_by_integration(coef, mean, var)
    assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


def test_shifted_nodes_broadcast():
    rule = gauss_hermite_rule(4)
    t = rule.shifted_nodes(np.array([0.0, 1.0]), np.array([1.0, 4.0]))
    assert t.shape == (2, 4)
    np.testing.assert_allclose(t[1], 1.0 + 2.0 * rule.nodes)

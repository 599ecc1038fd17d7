from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackbo.beliefs import (
    JITTER,
    belief_moments,
    conditional_gaussian,
    conditional_posterior_chain,
    layer_moments,
    output_posteriors,
)
from stackbo.nn import NetworkArchitecture
from stackbo.quadrature import gauss_hermite_rule
from stackbo.surrogate import (
    FidelityLayer,
    MultiFidelityModel,
    WeightSample,
    deterministic_output,
    random_model,
)

from conftest import draw_outputs, mc_chain

RULE = gauss_hermite_rule(20)


def _assert_matches_mc(alpha, eta, samples):
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(alpha - samples.mean()) < 3 * se
    assert eta == pytest.approx(samples.var(), rel=0.05)


def test_zero_covariance_gives_jitter_only():
    model = random_model(2, 1, 0)
    layer = replace(model.layers[0], L=np.zeros((8, 8)))
    _, gamma = layer_moments(layer, np.array([[0.3, 0.4]]))
    assert gamma[0] == JITTER
    top = replace(random_model(2, 2, 0).layers[1], L=np.zeros((8, 8)))
    assert conditional_gaussian(top, [0.3, 0.4], 0.5)[1] == JITTER


def test_zero_mean_gives_zero_u():
    model = random_model(2, 2, 1)
    layer = replace(model.layers[1], mu=np.zeros(8))
    u, gamma = conditional_gaussian(layer, [0.2, 0.9], 1.7)
    assert u == 0.0 and gamma > 0


def test_conditional_gaussian_matches_weight_draws():
    rng = np.random.default_rng(0)
    model = random_model(2, 2, 2)
    layer = model.layers[1]
    x, fp = np.array([0.4, 0.1]), -0.8
    u, gamma = conditional_gaussian(layer, x, fp)
    draws = draw_outputs(layer, np.repeat(np.append(x, fp)[None, :], 10**6, axis=0), rng)
    _assert_matches_mc(u, gamma, draws)


def test_conditional_gaussian_input_check():
    model = random_model(2, 2, 2)
    with pytest.raises(ValueError):
        conditional_gaussian(model.layers[1], [0.4, 0.1, 0.3], 0.0)


def test_single_fidelity_belief_is_layer_moments_in_raw_units():
    model = replace(random_model(3, 1, 3), y_offset=np.array([5.0]), y_scale=np.array([2.0]),
                    x_offset=np.array([-1.0, 0.0, 0.0]), x_scale=np.array([2.0, 1.0, 4.0]))
    x = np.array([0.0, 0.5, 2.0])
    (b,) = output_posteriors(model, x, RULE)
    u, g = layer_moments(model.layers[0], model.scale_x(x)[None, :])
    assert b.alpha == pytest.approx(5.0 + 2.0 * u[0], abs=1e-14)
    assert b.eta == pytest.approx(4.0 * g[0], rel=1e-14)


def _linear_stack(l_scale=0.3, B=50.0):
    """Layer 2 outputs f_1 exactly in mean; its weight noise acts on a constant basis unit."""
    base = random_model(2, 1, 4)
    a2 = NetworkArchitecture((3, 2), "relu")
    W = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    theta = np.concatenate([W.ravel(), [B, B]])
    L = np.array([[0.0, 0.0], [0.0, l_scale]])
    top = FidelityLayer(a2, theta, np.array([1.0, -1.0]), L, 0.0)
    return MultiFidelityModel((base.layers[0], top), 2), (l_scale * B) ** 2 + JITTER


def test_linear_layer_propagation_closed_form():
    model, gamma2 = _linear_stack()
    x = np.array([0.3, 0.6])
    b1, b2 = output_posteriors(model, x, RULE)
    assert b2.alpha == pytest.approx(b1.alpha, abs=1e-10)
    assert b2.eta == pytest.approx(b1.eta + gamma2, rel=1e-12)


@pytest.mark.parametrize("seed", [5, 6])
def test_two_fidelity_beliefs_match_weight_draws(seed):
    rng = np.random.default_rng(seed)
    model = random_model(2, 2, seed)
    x = rng.uniform(0, 1, 2)
    beliefs = output_posteriors(model, x, RULE)
    draws = mc_chain(model, x, 10**6, rng)
    for m in (1, 2):
        _assert_matches_mc(beliefs[m - 1].alpha, beliefs[m - 1].eta, draws[m])


def test_chain_one_step_equals_conditional_gaussian():
    model = random_model(2, 3, 7)
    x = np.array([0.2, 0.8])
    (cb,) = conditional_posterior_chain(model, x, 2, 0.35, RULE)
    u, g = conditional_gaussian(model.layers[2], x, 0.35)
    assert cb.alpha_hat == pytest.approx(u, abs=1e-14)
    assert cb.eta_hat == pytest.approx(g, rel=1e-14)


def test_chain_collapses_without_weight_uncertainty():
    model = random_model(2, 3, 8)
    model = replace(model, layers=tuple(replace(l, L=np.zeros_like(l.L)) for l in model.layers))
    x = np.array([0.5, 0.1])
    mean_w = WeightSample(tuple(l.mu for l in model.layers))
    f1 = deterministic_output(model, mean_w, x, 1)
    chain = conditional_posterior_chain(model, x, 1, f1, RULE)
    assert chain[-1].alpha_hat == pytest.approx(deterministic_output(model, mean_w, x, 3), abs=1e-6)
    assert chain[0].eta_hat == JITTER
    assert chain[-1].eta_hat < 1e-8


def test_three_fidelity_conditional_chain_matches_weight_draws():
    rng = np.random.default_rng(9)
    model = random_model(2, 3, 9)
    x = np.array([0.7, 0.3])
    f1 = 0.4
    chain = conditional_posterior_chain(model, x, 1, f1, RULE)
    draws = mc_chain(model, x, 10**6, rng, start=(1, f1))
    _assert_matches_mc(chain[0].alpha_hat, chain[0].eta_hat, draws[2])
    _assert_matches_mc(chain[1].alpha_hat, chain[1].eta_hat, draws[3])


def test_chain_raw_units():
    model = replace(random_model(1, 2, 10), y_offset=np.array([3.0, -1.0]), y_scale=np.array([2.0, 0.5]))
    (cb,) = conditional_posterior_chain(model, [0.5], 1, 7.0, RULE)
    u, g = conditional_gaussian(model.layers[1], [0.5], (7.0 - 3.0) / 2.0)
    assert cb.alpha_hat == pytest.approx(-1.0 + 0.5 * u, abs=1e-14)
    assert cb.eta_hat == pytest.approx(0.25 * g, rel=1e-14)
    with pytest.raises(ValueError):
        conditional_posterior_chain(model, [0.5], 2, 0.0, RULE)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), M=st.integers(2, 4), act=st.sampled_from(["tanh", "relu"]),
       K=st.sampled_from([1, 2, 5, 20]))
def test_variance_never_below_average_conditional_variance(seed, M, act, K):
    rng = np.random.default_rng(seed)
    model = random_model(2, M, seed, activation=act, l_scale=float(rng.uniform(1e-4, 2.0)))
    X = rng.uniform(-0.5, 1.5, (4, 2))
    alpha, eta, gam = belief_moments(model, X, gauss_hermite_rule(K), return_gamma=True)
    assert np.all(eta > 0)
    assert np.all(eta >= gam - 1e-12)
    assert np.all(np.isfinite(alpha))


def test_quadrature_order_convergence():
    rng = np.random.default_rng(11)
    for seed in range(10):
        model = random_model(2, 3, 100 + seed)
        X = rng.uniform(0, 1, (5, 2))
        _, e20 = belief_moments(model, X, gauss_hermite_rule(20))
        _, e50 = belief_moments(model, X, gauss_hermite_rule(50))
        assert np.max(np.abs(e20 - e50) / e50) < 1e-3


def test_beliefs_are_repeatable_and_batch_consistent():
    model = random_model(3, 3, 12)
    X = np.random.default_rng(0).uniform(0, 1, (6, 3))
    a1, e1 = belief_moments(model, X, RULE)
    a2, e2 = belief_moments(model, X, RULE)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(e1, e2)
    for i, x in enumerate(X):
        beliefs = output_posteriors(model, x, RULE)
        np.testing.assert_allclose([b.alpha for b in beliefs], a1[i], rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose([b.eta for b in beliefs], e1[i], rtol=1e-13)

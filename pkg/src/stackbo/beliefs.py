"""Gaussian beliefs over per-fidelity outputs via quadrature and moment matching.

Fidelity 1 has a closed-form Gaussian posterior. For fidelity ``m > 1`` the
conditional moments given ``f_{m-1}`` are averaged over the Gaussian belief
of ``f_{m-1}`` with a Gauss-Hermite rule, and the result is collapsed back to
a Gaussian. The variance is assembled as ``sum_k g_k gamma_k + sum_k g_k (u_k
- u_bar)^2`` so it can never drop below the averaged conditional variance.

The batch functions (``belief_moments``, ``conditional_moments``) work in the
model's internal units on scaled inputs; the public per-point functions take
and return raw units.
"""

from dataclasses import dataclass

import numpy as np

from stackbo._backend import mlp_forward

JITTER = 1e-10


@dataclass(frozen=True)
class GaussianBelief:
    alpha: float
    eta: float


@dataclass(frozen=True)
class ConditionalBelief:
    alpha_hat: float
    eta_hat: float


def layer_moments(layer, X_in):
    """Mean ``mu . phi`` and jittered variance ``|L^T phi|^2`` for layer inputs ``X_in``."""
    phi = mlp_forward(layer.theta, layer.arch.layer_widths, layer.arch.act_code, X_in)[-1]
    u = phi @ layer.mu
    v = phi @ layer.L
    gamma = np.einsum("ij,ij->i", v, v) + JITTER
    return u, gamma


def _stack_inputs(Xn, F):
    """Pair every row of ``Xn`` with each value in the matching row of ``F``."""
    n_per = F.size // Xn.shape[0]
    X_rep = np.repeat(Xn, n_per, axis=0)
    return np.concatenate([X_rep, F.reshape(-1, 1)], axis=1)


def _propagate(layer, Xn, alpha, eta, rule):
    """Moment-match ``f_next`` given Gaussian beliefs ``(alpha, eta)`` on its input channel.

    ``alpha`` and ``eta`` have shape ``(N, ...)`` with ``N`` rows of ``Xn``.
    Returns ``(alpha_next, eta_next, avg_gamma)`` of the same shape.
    """
    t = alpha[..., None] + np.sqrt(eta)[..., None] * rule.nodes
    u, gamma = layer_moments(layer, _stack_inputs(Xn, t))
    u = u.reshape(t.shape)
    gamma = gamma.reshape(t.shape)
    g = rule.weights
    u_bar = u @ g
    avg_gamma = gamma @ g
    spread = ((u - u_bar[..., None]) ** 2) @ g
    return u_bar, avg_gamma + spread, avg_gamma


def belief_moments(model, Xn, rule, upto=None, return_gamma=False):
    """Internal-unit beliefs ``(alpha, eta)`` of shape ``(N, upto)`` at scaled inputs."""
    upto = model.M if upto is None else upto
    N = Xn.shape[0]
    alpha = np.empty((N, upto))
    eta = np.empty((N, upto))
    gam = np.empty((N, upto))
    a, e = layer_moments(model.layers[0], Xn)
    alpha[:, 0], eta[:, 0], gam[:, 0] = a, e, e
    for m in range(1, upto):
        a, e, gbar = _propagate(model.layers[m], Xn, a, e, rule)
        alpha[:, m], eta[:, m], gam[:, m] = a, e, gbar
    if return_gamma:
        return alpha, eta, gam
    return alpha, eta


def conditional_moments(model, Xn, m, F, rule, top_only=True):
    """Beliefs of fidelities ``m+1..M`` given internal-unit values ``F`` of ``f_m``.

    ``F`` has shape ``(N, P)``: ``P`` conditioning values per input row.
    Returns ``(alpha_hat, eta_hat)`` for the top fidelity, or a list of such
    pairs for ``m+1..M`` when ``top_only`` is false.
    """
    if not 1 <= m < model.M:
        raise ValueError(f"conditioning fidelity must be in 1..{model.M - 1}, got {m}")
    F = np.asarray(F, dtype=np.float64)
    u, gamma = layer_moments(model.layers[m], _stack_inputs(Xn, F))
    a, e = u.reshape(F.shape), gamma.reshape(F.shape)
    chain = [(a, e)]
    for j in range(m + 1, model.M):
        a, e, _ = _propagate(model.layers[j], Xn, a, e, rule)
        chain.append((a, e))
    return chain[-1] if top_only else chain


def conditional_gaussian(layer, x, f_prev):
    """Conditional mean and variance of a layer's output given the previous fidelity.

    ``x`` is the (scaled) input vector without the appended channel.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if layer.arch.input_dim != x.size + 1:
        raise ValueError(
            f"layer takes {layer.arch.input_dim} inputs; got x of length {x.size} plus f_prev"
        )
    u, gamma = layer_moments(layer, np.append(x, f_prev)[None, :])
    return float(u[0]), float(gamma[0])


def output_posteriors(model, x, rule):
    """Gaussian belief of ``f_1(x)..f_M(x)`` in raw units."""
    xn = model.scale_x(np.asarray(x, dtype=np.float64).ravel())[None, :]
    alpha, eta = belief_moments(model, xn, rule)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(eta))):
        raise FloatingPointError("non-finite belief moments")
    return [
        GaussianBelief(
            float(model.unscale_f(alpha[0, m], m + 1)),
            float(eta[0, m] * model.y_scale[m] ** 2),
        )
        for m in range(model.M)
    ]


def conditional_posterior_chain(model, x, m, f_m_value, rule):
    """Conditional beliefs of ``f_{m+1}..f_M`` given ``f_m(x) = f_m_value`` (raw units)."""
    if not 1 <= m < model.M:
        raise ValueError(f"need 1 <= m < M = {model.M}, got m = {m}")
    xn = model.scale_x(np.asarray(x, dtype=np.float64).ravel())[None, :]
    F = np.array([[float(model.scale_f(f_m_value, m))]])
    chain = conditional_moments(model, xn, m, F, rule, top_only=False)
    out = []
    for k, (a, e) in enumerate(chain):
        fid = m + 1 + k
        out.append(
            ConditionalBelief(
                float(model.unscale_f(a[0, 0], fid)),
                float(e[0, 0] * model.y_scale[fid - 1] ** 2),
            )
        )
    return out

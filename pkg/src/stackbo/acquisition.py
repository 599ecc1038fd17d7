"""Cost-weighted max-value entropy search over (input, fidelity) pairs.

For a candidate ``(x, m)`` the score is ``(H0 - mean_{f*} H1(f*)) / lambda_m``:
``H0`` is the entropy of the Gaussian belief of ``f_m(x)`` and ``H1`` the
entropy of that belief conditioned on ``f_M(x) <= f*``. At the top fidelity
``H1`` is a truncated-Gaussian entropy; below it, the conditioned density is
moment-matched using quadrature over ``f_m`` and the conditional chain up to
``f_M``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from stackbo.beliefs import JITTER, belief_moments, conditional_moments
from stackbo.optim import BoxDomain, OptimizationError, lbfgs_maximize
from stackbo.surrogate import chain_value_and_grad, sample_weights

log = logging.getLogger(__name__)

R_FLOOR = 1e-12
Z_FLOOR = 1e-12
FD_STEP = 1e-5
_HALF_LOG_2PIE = 0.5 * np.log(2 * np.pi * np.e)
_HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class CostModel:
    lambdas: tuple

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        if not lam or any(not v > 0 for v in lam):
            raise ValueError(f"query costs must be positive, got {self.lambdas}")
        object.__setattr__(self, "lambdas", lam)

    def __getitem__(self, m):
        """Cost of fidelity ``m`` (1-based)."""
        return self.lambdas[m - 1]

    def __len__(self):
        return len(self.lambdas)


@dataclass(frozen=True)
class MaxValueSamples:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ValueError("need at least one finite max-value sample")
        object.__setattr__(self, "values", v)

    @property
    def size(self):
        return self.values.size


@dataclass(frozen=True)
class TruncationStats:
    Z: float
    Z1: float
    Z2: float
    beta: float = None

    @property
    def variance(self):
        return self.Z2 / self.Z - (self.Z1 / self.Z) ** 2


# -- entropies ---------------------------------------------------------------


def gaussian_entropy(eta):
    if not eta > 0:
        raise ValueError(f"variance must be positive, got {eta}")
    return float(0.5 * np.log(2 * np.pi * np.e * eta))


def _truncated_top(alpha, eta, fstar):
    """Entropy of ``N(alpha, eta)`` truncated to ``(-inf, fstar]``; broadcasts."""
    beta = (fstar - alpha) / np.sqrt(eta)
    log_cdf = log_ndtr(beta)
    # beta * pdf / cdf, formed in log space so deep truncation does not overflow
    ratio = beta * np.exp(-0.5 * beta * beta - _HALF_LOG_2PI - log_cdf)
    return _HALF_LOG_2PIE + 0.5 * np.log(eta) + log_cdf - 0.5 * ratio


def truncated_entropy_top(belief, f_star):
    """Entropy of the top-fidelity belief conditioned on ``f_M <= f_star``."""
    return float(_truncated_top(belief.alpha, belief.eta, f_star))


def _truncation_weights(model, Xn, m, alpha_m, eta_m, fstar_n, rule):
    """Quadrature nodes of ``f_m`` and clamped ``R`` values, shapes ``(N, K)`` and ``(N, K, S)``."""
    t = alpha_m[:, None] + np.sqrt(eta_m)[:, None] * rule.nodes
    a_hat, e_hat = conditional_moments(model, Xn, m, t, rule)
    z = (fstar_n[None, None, :] - a_hat[..., None]) / np.sqrt(e_hat)[..., None]
    R = np.clip(ndtr(z), R_FLOOR, 1.0)
    return t, R


def _lower_entropies(t, R, rule):
    """Moment-matched entropies, shape ``(N, S)``, from nodes ``t`` and ``R``."""
    gR = rule.weights[None, :, None] * R
    Z = np.maximum(gR.sum(axis=1), Z_FLOOR)
    nu = gR / Z[:, None, :]
    t_bar = np.einsum("nks,nk->ns", nu, t)
    var = np.einsum("nks,nks->ns", nu, (t[..., None] - t_bar[:, None, :]) ** 2)
    return _HALF_LOG_2PIE + 0.5 * np.log(np.maximum(var, JITTER))


def truncation_stats(model, x, m, f_star, rule):
    """``Z, Z1, Z2`` (raw units of ``f_m``) for one input; ``beta`` is set when ``m = M``."""
    xn = model.scale_x(np.asarray(x, dtype=np.float64).ravel())[None, :]
    M = model.M
    alpha, eta = belief_moments(model, xn, rule, upto=m)
    fs = np.atleast_1d(model.scale_f(f_star, M))
    if m == M:
        beta = float((fs[0] - alpha[0, M - 1]) / np.sqrt(eta[0, M - 1]))
        return TruncationStats(float(ndtr(beta)), np.nan, np.nan, beta)
    t, R = _truncation_weights(model, xn, m, alpha[:, m - 1], eta[:, m - 1], fs, rule)
    t_raw = model.unscale_f(t[0], m)
    r = R[0, :, 0]
    g = rule.weights
    return TruncationStats(float(g @ r), float(g @ (t_raw * r)), float(g @ (t_raw**2 * r)))


def truncated_entropy_lower(model, x, m, f_star, rule):
    """Entropy of ``f_m(x)`` given ``f_M(x) <= f_star`` for ``m < M`` (raw units)."""
    if not 1 <= m < model.M:
        raise ValueError(f"need 1 <= m < M = {model.M}, got {m}")
    xn = model.scale_x(np.asarray(x, dtype=np.float64).ravel())[None, :]
    alpha, eta = belief_moments(model, xn, rule, upto=m)
    fs = np.atleast_1d(model.scale_f(f_star, model.M))
    t, R = _truncation_weights(model, xn, m, alpha[:, m - 1], eta[:, m - 1], fs, rule)
    h = _lower_entropies(t, R, rule)[0, 0]
    return float(h + np.log(model.y_scale[m - 1]))


# -- acquisition ------------------------------------------------------------


def information_gain(model, Xn, m, fstars, rule):
    """Unclamped ``H0 - mean H1`` at scaled inputs ``Xn`` (shape ``(N,)``).

    Entropies are taken in internal units; the difference is unit-free.
    """
    M = model.M
    alpha, eta = belief_moments(model, Xn, rule, upto=m)
    fs = model.scale_f(np.asarray(fstars, dtype=np.float64), M)
    h0 = _HALF_LOG_2PIE + 0.5 * np.log(eta[:, m - 1])
    if m == M:
        h1 = _truncated_top(alpha[:, M - 1, None], eta[:, M - 1, None], fs[None, :])
    else:
        t, R = _truncation_weights(model, Xn, m, alpha[:, m - 1], eta[:, m - 1], fs, rule)
        h1 = _lower_entropies(t, R, rule)
    return h0 - h1.mean(axis=1)


def acquisition_values(model, Xn, m, costs, fstars, rule, clamp=True):
    """Benefit-cost scores ``max(0, H0 - mean H1) / lambda_m`` at scaled inputs."""
    gain = information_gain(model, Xn, m, fstars, rule)
    if not np.all(np.isfinite(gain)):
        raise FloatingPointError("non-finite mutual information")
    if clamp:
        low = gain.min()
        if low < -0.1:
            log.debug("mutual-information estimate %.3g below zero at fidelity %d", low, m)
        gain = np.maximum(gain, 0.0)
    return gain / costs[m]


def mutual_info(x, m, model, costs, fstars, rule, clamp=True):
    """Acquisition score of querying ``x`` (raw units) at fidelity ``m``."""
    if not 1 <= m <= model.M:
        raise ValueError(f"fidelity must be in 1..{model.M}, got {m}")
    values = fstars.values if isinstance(fstars, MaxValueSamples) else fstars
    xn = model.scale_x(np.asarray(x, dtype=np.float64).ravel())[None, :]
    return float(acquisition_values(model, xn, m, costs, values, rule, clamp=clamp)[0])


def sample_max_values(model, domain, S, lbfgs_cfg, rng_seed, starts=None):
    """Maximize ``S`` posterior function draws of the top fidelity over the box.

    ``starts`` (raw units, optional) seed the first restarts of every search.
    """
    if S < 1:
        raise ValueError("need at least one max-value sample")
    unit = BoxDomain.unit(domain.dim)
    M = model.M
    seeds = np.random.SeedSequence(rng_seed).spawn(S)
    values = np.empty(S)
    for s, ss in enumerate(seeds):
        w_seed, opt_seed = ss.generate_state(2)
        w = sample_weights(model, int(w_seed)).weights

        def f(u, w=w):
            return chain_value_and_grad(model, w, u, M)

        _, best = lbfgs_maximize(f, unit, lbfgs_cfg, int(opt_seed), starts=_unit_starts(domain, starts))
        values[s] = model.unscale_f(best, M)
    return MaxValueSamples(values)


def _unit_starts(domain, starts):
    if starts is None or len(starts) == 0:
        return None
    return domain.to_unit(np.atleast_2d(np.asarray(starts, dtype=np.float64)))


def _fd_objective(model, m, costs, fstars, rule):
    """Value and central-difference gradient on the unit box, from one batched call."""

    def fg(u):
        d = u.size
        pts = np.repeat(u[None, :], 2 * d + 1, axis=0)
        idx = np.arange(d)
        pts[1 + idx, idx] += FD_STEP
        pts[1 + d + idx, idx] -= FD_STEP
        try:
            vals = acquisition_values(model, pts, m, costs, fstars, rule)
        except FloatingPointError:
            return np.nan, np.full(d, np.nan)
        grad = (vals[1:d + 1] - vals[d + 1:]) / (2 * FD_STEP)
        return vals[0], grad

    return fg


def maximize_acquisition(model, costs, fstars, domain, lbfgs_cfg, rule, rng_seed, fidelities=None,
                         starts=None):
    """Best ``(x, m, score)`` over the box and the allowed fidelities.

    Each fidelity gets its own multi-start L-BFGS run; ties go to the cheaper
    (lower) fidelity. ``starts`` (raw units, optional) replace the first
    uniform restarts.
    """
    values = fstars.values if isinstance(fstars, MaxValueSamples) else np.asarray(fstars)
    fids = range(1, model.M + 1) if fidelities is None else sorted(fidelities)
    unit = BoxDomain.unit(domain.dim)
    seeds = np.random.SeedSequence(rng_seed).spawn(model.M)
    best = None
    for m in fids:
        try:
            u, score = lbfgs_maximize(
                _fd_objective(model, m, costs, values, rule), unit, lbfgs_cfg,
                int(seeds[m - 1].generate_state(1)[0]), starts=_unit_starts(domain, starts),
            )
        except (OptimizationError, FloatingPointError) as exc:
            log.warning("acquisition maximization failed at fidelity %d: %s", m, exc)
            continue
        if best is None or score > best[2]:
            best = (domain.from_unit(u), m, score)
    if best is None:
        raise OptimizationError("no fidelity produced a finite acquisition score")
    x, m, score = best
    return domain.project(x), m, float(score)

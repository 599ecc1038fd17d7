"""First-order (ADAM) and quasi-Newton (projected L-BFGS) optimizers."""

from collections import deque
from dataclasses import dataclass

import numpy as np


class OptimizationError(RuntimeError):
    """Raised when an optimizer meets a non-finite objective it cannot recover from."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 1000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 100
    grad_tol: float = 1e-8
    restarts: int = 10

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).ravel()
        hi = np.asarray(self.upper, dtype=np.float64).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper bounds must be non-empty and equally long")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_bounds(cls, bounds):
        b = np.asarray(bounds, dtype=np.float64)
        return cls(b[:, 0], b[:, 1])

    @classmethod
    def unit(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng, n):
        return self.lower + rng.random((n, self.dim)) * self.width

    def to_unit(self, x):
        return (np.asarray(x, dtype=np.float64) - self.lower) / self.width

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=np.float64) * self.width


def adam_minimize(objective_with_grad, init, cfg, keep_best=True):
    """Run ``cfg.max_epochs`` bias-corrected ADAM steps.

    ``objective_with_grad(x)`` returns ``(value, grad)``; it may be stochastic.
    With ``keep_best`` the best evaluated iterate is returned, otherwise the
    last evaluated one. Returns ``(x, value)``.
    """
    x = np.array(init, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, lr, eps = cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.epsilon
    best_x, best_f = x.copy(), np.inf
    f = np.inf
    for t in range(1, cfg.max_epochs + 1):
        f, g = objective_with_grad(x)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite objective or gradient at iterate {t - 1}", t - 1)
        if f < best_f:
            best_x, best_f = x.copy(), f
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
    if keep_best:
        return best_x, float(best_f)
    return x, float(f)


def _two_loop(g, s_hist, y_hist):
    """Apply the L-BFGS inverse-Hessian estimate to ``g``."""
    rhos = [1.0 / (s @ y) for s, y in zip(s_hist, y_hist)]
    q = g.copy()
    alphas = [0.0] * len(rhos)
    for i in range(len(rhos) - 1, -1, -1):
        alphas[i] = rhos[i] * (s_hist[i] @ q)
        q -= alphas[i] * y_hist[i]
    q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
    for i in range(len(rhos)):
        b = rhos[i] * (y_hist[i] @ q)
        q += (alphas[i] - b) * s_hist[i]
    return q


def _lbfgs_min(fg, x0, domain, cfg):
    """Projected L-BFGS descent from one start; returns ``(x, f)`` of the best iterate."""
    x = domain.project(np.array(x0, dtype=np.float64))
    f, g = fg(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return x, np.inf
    s_hist, y_hist = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    scale = np.max(domain.width)
    for _ in range(cfg.max_iters):
        pg = domain.project(x - g) - x
        if np.max(np.abs(pg)) < cfg.grad_tol:
            break
        d = -_two_loop(g, s_hist, y_hist) if s_hist else -g
        if d @ g >= 0:
            s_hist.clear()
            y_hist.clear()
            d = -g
        step = 1.0
        if not s_hist:
            dn = np.max(np.abs(d))
            if dn > 0:
                step = min(1.0, 0.5 * scale / dn)
        accepted = False
        for _ in range(40):
            x_new = domain.project(x + step * d)
            dx = x_new - x
            if not np.any(dx):
                break
            f_new, g_new = fg(x_new)
            # Armijo on the projected step; slope factor 1e-4
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)) and f_new <= f + 1e-4 * (g @ dx):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        yv = g_new - g
        sy = dx @ yv
        if sy > 1e-12 * max(1.0, np.sqrt((dx @ dx) * (yv @ yv))):
            s_hist.append(dx)
            y_hist.append(yv)
        converged = abs(f - f_new) <= 1e-14 * max(1.0, abs(f))
        x, f, g = x_new, f_new, g_new
        if converged:
            break
    return x, f


def lbfgs_maximize(objective_with_grad, domain, cfg, rng_seed, starts=None):
    """Maximize over a box with ``cfg.restarts`` projected L-BFGS runs.

    Starts are drawn uniformly from the box (``starts``, if given, are used
    first and count toward the restarts). Returns ``(x, value)`` of the best
    run; ties go to the earlier restart.
    """
    rng = np.random.default_rng(rng_seed)
    init = domain.sample(rng, cfg.restarts)
    if starts is not None:
        starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))[: cfg.restarts]
        init[: len(starts)] = starts

    def neg(x):
        f, g = objective_with_grad(x)
        return -f, -np.asarray(g, dtype=np.float64)

    best_x, best_f = None, np.inf
    for x0 in init:
        x, f = _lbfgs_min(neg, x0, domain, cfg)
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None:
        raise OptimizationError("all L-BFGS restarts produced non-finite objective values")
    return domain.project(best_x), float(-best_f)

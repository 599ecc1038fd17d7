"""Fast built-in property checks, run by ``stackbo selftest`` and ``stackbo bench-check``."""

from dataclasses import dataclass

import numpy as np

from stackbo import _backend
from stackbo.acquisition import truncation_stats
from stackbo.beliefs import belief_moments
from stackbo.benchmarks import make_task
from stackbo.quadrature import gauss_hermite_rule, gaussian_expectation
from stackbo.surrogate import Dataset, _pack_grads, elbo_estimate, pack, random_model, unpack

# task -> (fidelity, printed optimum value, tolerance)
OPTIMA_TOLERANCE = {"branin": (3, -0.3979, 1e-3), "park1": (2, 25.5893, 1e-3), "levy": (3, 0.0, 1e-12)}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def benchmark_optima_table():
    """Rows ``(task, point, value, expected, tol, ok)`` for every listed optimum."""
    rows = []
    for name, (m, expected, tol) in OPTIMA_TOLERANCE.items():
        task = make_task(name)
        for pt in task.optimum_points:
            val = task.evaluate(m, np.asarray(pt, dtype=np.float64))
            rows.append((name, tuple(pt), val, expected, tol, abs(val - expected) <= tol))
    return rows


def check_benchmarks():
    rows = benchmark_optima_table()
    worst = max(abs(r[2] - r[3]) for r in rows)
    return CheckResult("benchmark optima", all(r[5] for r in rows), f"max deviation {worst:.2e}")


def check_quadrature(n_trials=20, seed=0):
    """Polynomials of degree <= 2K-1 against random Gaussians, exact moments as reference."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for K in (2, 5, 20):
        rule = gauss_hermite_rule(K)
        for _ in range(n_trials):
            deg = int(rng.integers(0, 2 * K))
            coef = rng.standard_normal(deg + 1)
            mean, var = rng.normal(0, 1), rng.uniform(0.1, 2.0)
            got = gaussian_expectation(lambda t: np.polyval(coef, t), mean, var, rule)
            want = _poly_gauss_moment(coef, mean, var)
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return CheckResult("quadrature exactness", worst <= 1e-9, f"max relative error {worst:.2e}")


def _poly_gauss_moment(coef, mean, var):
    """E[p(t)] for t ~ N(mean, var) via the raw-moment recursion."""
    deg = len(coef) - 1
    mom = [1.0, mean]
    for k in range(2, deg + 1):
        mom.append(mean * mom[k - 1] + (k - 1) * var * mom[k - 2])
    return float(sum(c * mom[deg - i] for i, c in enumerate(coef)))


def check_variance_bound(n_models=100, seed=1):
    rule = gauss_hermite_rule(20)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for i in range(n_models):
        M = int(rng.integers(2, 4))
        d = int(rng.integers(1, 4))
        model = random_model(d, M, int(rng.integers(2**31)), activation=("tanh", "relu")[i % 2])
        X = rng.uniform(0, 1, (5, d))
        _, eta, gam = belief_moments(model, X, rule, return_gamma=True)
        if np.any(eta <= 0):
            return CheckResult("belief variance bound", False, "non-positive variance")
        worst = min(worst, float(np.min(eta - gam)))
    return CheckResult("belief variance bound", worst >= -1e-12, f"min(eta - avg gamma) = {worst:.2e}")


def check_truncation_identity(n_evals=100, seed=2):
    rule = gauss_hermite_rule(20)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_evals):
        model = random_model(2, 2, int(rng.integers(2**31)))
        x = rng.uniform(0, 1, 2)
        st = truncation_stats(model, x, 1, rng.normal(0, 2), rule)
        if st.Z > 1e-300:
            worst = min(worst, st.variance)
    return CheckResult("truncated moment identity", worst >= -1e-12, f"min variance {worst:.2e}")


def check_elbo_gradient(n_models=2, seed=3, h=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        d, M = 2, 2
        model = random_model(d, M, int(rng.integers(2**31)), width=5)
        data = Dataset([rng.uniform(0, 1, (6, d)), rng.uniform(0, 1, (3, d))],
                       [rng.standard_normal(6), rng.standard_normal(3)])
        _, grads = elbo_estimate(model, data, 7)
        g = _pack_grads(model, grads)
        vec = pack(model)
        idx = rng.choice(vec.size, size=min(40, vec.size), replace=False)
        for i in idx:
            e = np.zeros_like(vec)
            e[i] = h
            fp = elbo_estimate(unpack(model, vec + e), data, 7)[0]
            fm = elbo_estimate(unpack(model, vec - e), data, 7)[0]
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - g[i]) / max(1.0, abs(fd)))
    return CheckResult("ELBO gradient", worst < 1e-4, f"max relative error {worst:.2e}")


def check_backends(seed=4):
    if _backend.compiled_kernels is None:
        return CheckResult("kernel backends agree", True, "compiled kernels unavailable; skipped")
    rng = np.random.default_rng(seed)
    widths = (3, 7, 7, 5)
    theta = rng.standard_normal(sum(o * i + o for i, o in zip(widths[:-1], widths[1:])))
    X = rng.standard_normal((11, 3))
    G = rng.standard_normal((11, 5))
    worst = 0.0
    for act in (0, 1):
        a = _backend.python_kernels.mlp_forward(theta, widths, act, X)
        b = _backend.compiled_kernels.mlp_forward(theta, widths, act, X)
        ga = _backend.python_kernels.mlp_backward(theta, widths, act, a, G)
        gb = _backend.compiled_kernels.mlp_backward(theta, widths, act, b, G)
        worst = max(worst, np.max(np.abs(a[-1] - b[-1])), np.max(np.abs(ga[0] - gb[0])),
                    np.max(np.abs(ga[1] - gb[1])))
    return CheckResult("kernel backends agree", worst < 1e-10, f"max abs difference {worst:.2e}")


CHECKS = (check_benchmarks, check_quadrature, check_variance_bound, check_truncation_identity,
          check_elbo_gradient, check_backends)


def run_selftest():
    return [check() for check in CHECKS]

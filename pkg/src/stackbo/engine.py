"""The multi-fidelity BO outer loop and regret bookkeeping."""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from stackbo.acquisition import maximize_acquisition, sample_max_values
from stackbo.beliefs import belief_moments
from stackbo.benchmarks import DEFAULT_INIT_COUNTS, make_task
from stackbo.nn import NetworkArchitecture
from stackbo.optim import AdamConfig, BoxDomain, LbfgsConfig, OptimizationError, lbfgs_maximize
from stackbo.quadrature import DEFAULT_ORDER, gauss_hermite_rule
from stackbo.surrogate import (
    Dataset,
    TrainingDivergence,
    build_model,
    reset_variational,
    train,
)

log = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-9
DUPLICATE_JITTER = 1e-3

# purpose tags for independent random streams derived from the run seed
_DESIGN, _INIT, _TRAIN, _FSTAR, _ACQ, _JITTER, _IR = range(7)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    budget: float
    init_counts: Optional[tuple] = None
    costs: Optional[tuple] = None
    archs: tuple = ((3, 40),)
    activation: str = "tanh"
    lr: float = 1e-2
    epochs_init: int = 3000
    epochs_retrain: int = 1000
    n_mc: int = 1
    quad_order: int = DEFAULT_ORDER
    n_max_samples: int = 10
    lbfgs_restarts: int = 10
    lbfgs_iters: int = 50
    max_iters: Optional[int] = None
    informed_starts: bool = True
    seed: int = 0
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        task = make_task(self.task, self.costs)
        counts = self.init_counts
        if counts is None:
            counts = DEFAULT_INIT_COUNTS.get(self.task, (1,) * task.M)
        counts = tuple(int(c) for c in counts)
        if len(counts) != task.M or any(c < 0 for c in counts) or not any(counts):
            raise ValueError(f"init_counts must be {task.M} non-negative integers, not all zero; got {counts}")
        object.__setattr__(self, "init_counts", counts)
        archs = tuple(tuple(int(v) for v in a) for a in self.archs)
        if len(archs) == 1:
            archs = archs * task.M
        if len(archs) != task.M:
            raise ValueError(f"need 1 or {task.M} architectures, got {len(archs)}")
        object.__setattr__(self, "archs", archs)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass
class TraceRecord:
    iteration: int
    x: np.ndarray
    fidelity: int
    y: float
    acq_score: float
    cum_cost: float
    simple_regret: float
    inference_regret: float
    wall_time: float = 0.0


@dataclass
class RunTrace:
    config: ExperimentConfig
    initial_design: list = field(default_factory=list)
    records: list = field(default_factory=list)
    model: object = None
    error: Optional[str] = None
    initial_inference_regret: Optional[float] = None

    @property
    def completed(self):
        return self.error is None


def _rng(seed, *tags):
    return np.random.default_rng([int(seed), *tags])


def _seed(seed, *tags):
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1)[0])


def initial_design(task, counts, rng_seed):
    """Uniform random inputs per fidelity, evaluated at that fidelity."""
    rng = _rng(rng_seed, _DESIGN)
    data = Dataset.empty(task.M, task.domain.dim)
    for m, n in enumerate(counts, start=1):
        X = task.domain.sample(rng, int(n))
        data.X[m - 1] = X
        data.y[m - 1] = np.array([task.evaluate(m, x) for x in X])
    return data


def _best_top(task, trace, upto=None):
    vals = [y for m, _, y in trace.initial_design if m == task.M]
    records = trace.records if upto is None else trace.records[:upto]
    vals += [r.y for r in records if r.fidelity == task.M]
    return max(vals) if vals else None


def simple_regret(task, trace, upto=None):
    """Optimum minus the best top-fidelity value queried so far; ``inf`` if none yet."""
    if task.optimum_value is None:
        raise ValueError(f"task {task.name!r} has no known optimum")
    best = _best_top(task, trace, upto)
    return float("inf") if best is None else float(task.optimum_value - best)


def surrogate_maximum(model, domain, lbfgs_cfg, rule, rng_seed):
    """Maximize the top-fidelity belief mean over the box; returns ``(x, value)`` in raw units."""
    M = model.M
    h = 1e-5

    def fg(u):
        d = u.size
        pts = np.repeat(u[None, :], 2 * d + 1, axis=0)
        idx = np.arange(d)
        pts[1 + idx, idx] += h
        pts[1 + d + idx, idx] -= h
        alpha, _ = belief_moments(model, pts, rule)
        a = alpha[:, M - 1]
        return a[0], (a[1:d + 1] - a[d + 1:]) / (2 * h)

    u, best = lbfgs_maximize(fg, BoxDomain.unit(domain.dim), lbfgs_cfg, rng_seed)
    return domain.from_unit(u), float(model.unscale_f(best, M))


def inference_regret(task, model, lbfgs_cfg, rule=None, rng_seed=0):
    """Optimum minus the surrogate's estimated top-fidelity maximum (may be negative)."""
    if task.optimum_value is None:
        raise ValueError(f"task {task.name!r} has no known optimum")
    rule = rule or gauss_hermite_rule(DEFAULT_ORDER)
    _, best = surrogate_maximum(model, task.domain, lbfgs_cfg, rule, rng_seed)
    return float(task.optimum_value - best)


def _architectures(cfg, task):
    d = task.domain.dim
    return [
        NetworkArchitecture.from_depth_width(d if m == 0 else d + 1, depth, width, cfg.activation)
        for m, (depth, width) in enumerate(cfg.archs)
    ]


def _incumbents(task, data, x_hat):
    """Best observed input per fidelity, top fidelity first, then the surrogate argmax."""
    pts = []
    for m in range(task.M, 0, -1):
        if len(data.y[m - 1]):
            pts.append(data.X[m - 1][int(np.argmax(data.y[m - 1]))])
    if x_hat is not None:
        pts.append(x_hat)
    return np.array(pts) if pts else None


def _deduplicate(x, m, data, domain, rng):
    u = domain.to_unit(x)
    seen = data.X[m - 1]
    if len(seen) and np.min(np.max(np.abs(domain.to_unit(seen) - u), axis=1)) < DUPLICATE_TOL:
        u = np.clip(u + rng.uniform(-DUPLICATE_JITTER, DUPLICATE_JITTER, u.size), 0.0, 1.0)
        return domain.from_unit(u)
    return x


def bo_run(cfg, progress=None):
    """Run one seeded optimization until the budget cannot pay for another query."""
    task = make_task(cfg.task, cfg.costs)
    seed = cfg.seed
    rule = gauss_hermite_rule(cfg.quad_order)
    lbfgs_cfg = LbfgsConfig(max_iters=cfg.lbfgs_iters, restarts=cfg.lbfgs_restarts)
    costs = task.costs
    trace = RunTrace(config=cfg)
    t0 = time.perf_counter()

    data = initial_design(task, cfg.init_counts, seed)
    for m in range(1, task.M + 1):
        for x, y in zip(data.X[m - 1], data.y[m - 1]):
            trace.initial_design.append((m, x.copy(), float(y)))

    try:
        model = build_model(task.domain, _architectures(cfg, task), _seed(seed, _INIT))
        model = train(model, data, AdamConfig(learning_rate=cfg.lr, max_epochs=cfg.epochs_init),
                      cfg.n_mc, _seed(seed, _TRAIN, 0))
        trace.model = model
        x_hat, best_mean = surrogate_maximum(model, task.domain, lbfgs_cfg, rule, _seed(seed, _IR, 0))
        if task.optimum_value is not None:
            trace.initial_inference_regret = float(task.optimum_value - best_mean)
    except (TrainingDivergence, OptimizationError, FloatingPointError) as exc:
        trace.error = f"initial training failed: {exc}"
        return trace

    cum_cost = 0.0
    t = 0
    while True:
        remaining = cfg.budget - cum_cost
        allowed = [m for m in range(1, task.M + 1) if costs[m] <= remaining + 1e-12]
        if not allowed or (cfg.max_iters is not None and t >= cfg.max_iters):
            break
        t += 1
        starts = _incumbents(task, data, x_hat) if cfg.informed_starts else None
        try:
            fstars = sample_max_values(model, task.domain, cfg.n_max_samples, lbfgs_cfg, _seed(seed, _FSTAR, t),
                                       starts=starts)
            x, m, score = maximize_acquisition(model, costs, fstars, task.domain, lbfgs_cfg, rule,
                                               _seed(seed, _ACQ, t), fidelities=allowed, starts=starts)
            x = _deduplicate(x, m, data, task.domain, _rng(seed, _JITTER, t))
            y = task.evaluate(m, x)
            data.add(m, x, y)
            cum_cost += costs[m]
            model = reset_variational(model, _seed(seed, _INIT, t))
            model = train(model, data, AdamConfig(learning_rate=cfg.lr, max_epochs=cfg.epochs_retrain),
                          cfg.n_mc, _seed(seed, _TRAIN, t))
            trace.model = model
        except (TrainingDivergence, OptimizationError, FloatingPointError) as exc:
            trace.error = f"iteration {t}: {exc}"
            log.warning("run seed=%d stopped at iteration %d: %s", seed, t, exc)
            break
        record = TraceRecord(t, x, m, float(y), score, cum_cost, float("inf"), float("nan"),
                             time.perf_counter() - t0)
        trace.records.append(record)
        try:
            x_hat, best_mean = surrogate_maximum(model, task.domain, lbfgs_cfg, rule, _seed(seed, _IR, t))
        except OptimizationError as exc:
            log.warning("surrogate maximum unavailable at iteration %d: %s", t, exc)
            x_hat = best_mean = None
        if task.optimum_value is not None:
            record.simple_regret = simple_regret(task, trace)
            if best_mean is not None:
                record.inference_regret = float(task.optimum_value - best_mean)
        if progress is not None:
            progress(record)
    return trace

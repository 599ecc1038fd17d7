"""Multi-fidelity synthetic objectives (to be maximized) and the task registry."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from stackbo.acquisition import CostModel
from stackbo.optim import BoxDomain

PARK1_X1_FLOOR = 1e-6


@dataclass(frozen=True)
class BlackBoxTask:
    name: str
    M: int
    domain: BoxDomain
    evaluate_fn: Callable
    costs: CostModel
    optimum_value: Optional[float] = None
    optimum_points: Optional[tuple] = None
    check_domain: bool = True

    def __post_init__(self):
        if len(self.costs) != self.M:
            raise ValueError(f"{self.name}: {len(self.costs)} costs for {self.M} fidelities")
        lam = self.costs.lambdas
        if any(b <= a for a, b in zip(lam, lam[1:])):
            raise ValueError(f"{self.name}: costs must increase with fidelity, got {lam}")

    def evaluate(self, m, x):
        if not 1 <= m <= self.M:
            raise ValueError(f"{self.name}: fidelity must be in 1..{self.M}, got {m}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.domain.dim,):
            raise ValueError(f"{self.name}: expected a {self.domain.dim}-vector, got shape {x.shape}")
        if self.check_domain and not self.domain.contains(x):
            raise ValueError(f"{self.name}: {x} lies outside the task domain")
        return float(self.evaluate_fn(m, x))


BRANIN_DOMAIN = BoxDomain([-5.0, 0.0], [10.0, 15.0])
PARK1_DOMAIN = BoxDomain([0.0] * 4, [1.0] * 4)
LEVY_DOMAIN = BoxDomain([-10.0, -10.0], [10.0, 10.0])


def _branin3(x):
    x1, x2 = x[0], x[1]
    return (
        -((-1.275 * x1**2 / np.pi**2 + 5 * x1 / np.pi + x2 - 6) ** 2)
        - (10 - 5 / (4 * np.pi)) * np.cos(x1)
        - 10
    )


def _branin2(x):
    x1, x2 = x[0], x[1]
    return -10 * np.sqrt(-_branin3(x - 2)) - 2 * (x1 - 0.5) + 3 * (3 * x2 - 1) + 1


def _branin1(x):
    return -_branin2(1.2 * (x + 2)) + 3 * x[1] - 1


def branin_mf(m, x):
    """Three-fidelity Branin; ``m = 3`` is the target. Shifted arguments are not clamped."""
    x = np.asarray(x, dtype=np.float64)
    if not BRANIN_DOMAIN.contains(x):
        raise ValueError(f"branin input {x} outside [-5, 10] x [0, 15]")
    return float((_branin1, _branin2, _branin3)[m - 1](x))


def _park2(x):
    x1 = max(x[0], PARK1_X1_FLOOR)
    x2, x3, x4 = x[1], x[2], x[3]
    return x1 / 2 * (np.sqrt(1 + (x2 + x3**2) * x4 / x1**2) - 1) + (x1 + 3 * x4) * np.exp(1 + np.sin(x3))


def _park1(x):
    x1 = max(x[0], PARK1_X1_FLOOR)
    return (1 + np.sin(x1) / 10) * _park2(x) - 2 * x1 + x[1] ** 2 + x[2] ** 2 + 0.5


def park1_mf(m, x):
    """Two-fidelity Park1 on the unit 4-cube; ``x_1`` is floored at 1e-6."""
    x = np.asarray(x, dtype=np.float64)
    return float((_park1, _park2)[m - 1](x))


def _levy3(x):
    x1, x2 = x[0], x[1]
    return (
        -np.sin(3 * np.pi * x1) ** 2
        - (x1 - 1) ** 2 * (1 + np.sin(3 * np.pi * x2) ** 2)
        - (x2 - 1) ** 2 * (1 + np.sin(2 * np.pi * x2) ** 2)
    )


def levy_mf(m, x):
    """Three-fidelity Levy on ``[-10, 10]^2``."""
    x = np.asarray(x, dtype=np.float64)
    f3 = _levy3(x)
    if m == 3:
        return float(f3)
    if m == 2:
        return float(-np.exp(0.1 * np.sqrt(-f3)) - 0.1 * np.sqrt(1 + f3**2))
    return float(-np.sqrt(1 + f3**2))


def _make_branin():
    return BlackBoxTask(
        "branin", 3, BRANIN_DOMAIN, branin_mf, CostModel((1, 10, 100)), -0.3979,
        ((-np.pi, 12.275), (np.pi, 2.275), (9.425, 2.475)),
    )


def _make_park1():
    return BlackBoxTask(
        "park1", 2, PARK1_DOMAIN, park1_mf, CostModel((1, 10)), 25.5893,
        ((1.0, 1.0, 1.0, 1.0),),
    )


def _make_levy():
    return BlackBoxTask(
        "levy", 3, LEVY_DOMAIN, levy_mf, CostModel((1, 10, 100)), 0.0, ((1.0, 1.0),),
    )


TASKS = {"branin": _make_branin, "park1": _make_park1, "levy": _make_levy}

DEFAULT_INIT_COUNTS = {"branin": (20, 20, 2), "park1": (5, 2), "levy": (20, 20, 2)}


def register_task(name, factory, init_counts=None):
    """Make a custom task addressable by name (e.g. from a config file)."""
    TASKS[name] = factory
    if init_counts is not None:
        DEFAULT_INIT_COUNTS[name] = tuple(init_counts)


def make_task(name, costs=None):
    try:
        factory = TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; known tasks: {sorted(TASKS)}") from None
    task = factory()
    if costs is not None:
        task = BlackBoxTask(task.name, task.M, task.domain, task.evaluate_fn, CostModel(costs),
                            task.optimum_value, task.optimum_points, task.check_domain)
    return task

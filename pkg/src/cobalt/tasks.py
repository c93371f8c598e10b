"""Benchmark tasks, the constrained reward and simple regret."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm, qmc

from .gp import CandidateGrid


class Infeasible(enum.Enum):
    """Reward of an infeasible point and regret before any feasible query.

    An enum member supports no arithmetic or ordering, so it cannot leak into
    numeric code by accident.
    """

    INFEASIBLE = "inf_regret"

    def __str__(self) -> str:
        return self.value


INFEASIBLE = Infeasible.INFEASIBLE


@dataclass
class TaskDefinition:
    """A constrained maximization problem on a finite grid.

    Oracles are evaluated once at construction; queries afterwards are table
    lookups.  ``objective`` and ``constraints`` may be None for tasks defined
    only by their grid values (e.g. prior samples).
    """

    name: str
    grid: CandidateGrid
    objective_values: np.ndarray
    constraint_values: np.ndarray
    thresholds: tuple
    noise_std: tuple
    feasibility_margin: float = 0.0
    objective: Callable | None = None
    constraints: Sequence[Callable] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective_values = np.asarray(self.objective_values, dtype=float)
        cv = np.asarray(self.constraint_values, dtype=float)
        self.constraint_values = cv.reshape(-1, len(self.grid)) if cv.size else np.zeros((0, len(self.grid)))
        self.thresholds = tuple(float(h) for h in self.thresholds)
        if len(self.thresholds) != self.num_constraints:
            raise ValueError("one threshold per constraint required")
        self.noise_std = tuple(float(s) for s in self.noise_std)
        if len(self.noise_std) != self.num_constraints + 1:
            raise ValueError("noise_std needs one entry per function")
        feasible = self.feasible_mask
        if not np.any(feasible):
            raise ValueError(f"task {self.name}: no feasible grid point")
        fvals = np.where(feasible, self.objective_values, -np.inf)
        idx = int(np.argmax(fvals))
        self.true_optimum = (idx, float(self.objective_values[idx]))
        if self.num_constraints:
            clearance = float(np.min(self.constraint_values[:, idx] - np.asarray(self.thresholds)))
            if not clearance > self.feasibility_margin:
                raise ValueError(
                    f"task {self.name}: optimum clearance {clearance:.4g} "
                    f"<= margin {self.feasibility_margin:.4g}"
                )

    @property
    def num_constraints(self) -> int:
        return self.constraint_values.shape[0]

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def feasible_mask(self) -> np.ndarray:
        mask = np.ones(len(self.grid), dtype=bool)
        for values, h in zip(self.constraint_values, self.thresholds):
            mask &= values > h
        return mask

    @property
    def feasible_fraction(self) -> float:
        return float(np.mean(self.feasible_mask))

    def function_values(self, g: int) -> np.ndarray:
        """Noise-free values of function g on the grid (0 = objective)."""
        return self.objective_values if g == 0 else self.constraint_values[g - 1]

    def evaluate(self, index: int, g: int, rng: np.random.Generator | None = None) -> float:
        value = float(self.function_values(g)[index])
        if rng is not None and self.noise_std[g] > 0:
            value += self.noise_std[g] * rng.standard_normal()
        return value

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "grid_size": len(self.grid),
            "num_constraints": self.num_constraints,
            "thresholds": list(self.thresholds),
            "noise_std": list(self.noise_std),
            "feasible_fraction": self.feasible_fraction,
            "true_optimum_index": self.true_optimum[0],
            "true_optimum_value": self.true_optimum[1],
            **self.metadata,
        }


def make_task(name, grid, objective, constraints, thresholds, noise_std, margin=0.0, **meta):
    """Build a task from vectorized oracles taking an (N, d) array."""
    pts = grid.points
    fvals = objective(pts)
    cvals = np.array([c(pts) for c in constraints]) if constraints else np.zeros((0, len(grid)))
    return TaskDefinition(
        name, grid, fvals, cvals, thresholds, noise_std, margin, objective, tuple(constraints), meta
    )


def reward(index: int, task: TaskDefinition):
    """f(x) if every noise-free constraint strictly exceeds its threshold."""
    if task.feasible_mask[index]:
        return float(task.objective_values[index])
    return INFEASIBLE


def ppf_threshold(h: float, sigma: float, mu: float) -> float:
    """Deterministic threshold for the probabilistic constraint Pr(Y > h) >= mu."""
    if not 0 < mu < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(h + sigma * norm.ppf(mu))


def best_reward_series(indices: Sequence[int], task: TaskDefinition, start=INFEASIBLE):
    best, out = start, []
    for i in indices:
        r = reward(i, task)
        if r is not INFEASIBLE and (best is INFEASIBLE or r > best):
            best = r
        out.append(best)
    return out


def simple_regret_curve(record, task: TaskDefinition) -> list:
    """Per-iteration simple regret for a trial record.

    Queries from the initial design count towards the best reward.
    """
    start = INFEASIBLE
    for r in best_reward_series(getattr(record, "init_indices", ()), task):
        start = r
    f_star = task.true_optimum[1]
    return [
        INFEASIBLE if b is INFEASIBLE else f_star - b
        for b in best_reward_series(record.x_indices, task, start)
    ]


# -- synthetic tasks -------------------------------------------------------

RASTRIGIN_SWEEP = (5, 10, 20, 40, 60, 80)
NOISE_STD = 0.1


def rastrigin(x: np.ndarray) -> np.ndarray:
    """Negated Rastrigin; global maximum 0 at the origin."""
    x = np.atleast_2d(x)
    d = x.shape[1]
    return -10.0 * d - np.sum(x**2 - 10.0 * np.cos(2 * np.pi * x), axis=1)


def rastrigin_constraint(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(np.atleast_2d(x)[:, 0] + 0.7))


def threshold_for_fraction(values: np.ndarray, fraction: float) -> float:
    """Threshold h such that round(fraction * N) grid values exceed it."""
    n = values.shape[0]
    m = int(round(fraction * n))
    if not 0 < m < n:
        raise ValueError("fraction must leave both feasible and infeasible points")
    desc = np.sort(values)[::-1]
    if desc[m - 1] == desc[m]:
        raise ValueError("tied values at the requested fraction")
    return float(0.5 * (desc[m - 1] + desc[m]))


def rastrigin_1d_1c(variant: int = 60, grid_size: int = 1000) -> TaskDefinition:
    """Rastrigin-1D-1C on a uniform grid over [-5, 5].

    ``variant`` is the target feasible percentage.  60 uses the threshold
    sqrt(2); the other sweep variants solve for the threshold on the grid.
    """
    if variant not in RASTRIGIN_SWEEP:
        raise ValueError(f"unknown Rastrigin variant {variant!r}; choose from {RASTRIGIN_SWEEP}")
    grid = CandidateGrid(np.linspace(-5.0, 5.0, grid_size)[:, None])
    if variant == 60:
        h = math.sqrt(2.0)
    else:
        h = threshold_for_fraction(rastrigin_constraint(grid.points), variant / 100.0)
    return make_task(
        f"rastrigin-1d-1c@{variant}",
        grid,
        rastrigin,
        [rastrigin_constraint],
        [h],
        [NOISE_STD, NOISE_STD],
        target_feasible_fraction=variant / 100.0,
    )


def ackley(x: np.ndarray) -> np.ndarray:
    """Negated Ackley; global maximum 0 at the origin."""
    x = np.atleast_2d(x)
    d = x.shape[1]
    a = -20.0 * np.exp(-0.2 * np.sqrt(np.sum(x**2, axis=1) / d))
    b = -np.exp(np.sum(np.cos(2 * np.pi * x), axis=1) / d)
    return -(a + b + 20.0 + math.e)


def ackley_constraint_shell(x: np.ndarray) -> np.ndarray:
    return (np.linalg.norm(np.atleast_2d(x) - 1.0, axis=1) - 5.5) ** 2 - 1.0


def ackley_constraint_box(x: np.ndarray) -> np.ndarray:
    return 9.0 - np.max(np.abs(np.atleast_2d(x)), axis=1) ** 2


ACKLEY_LOWER, ACKLEY_UPPER = -5.0, 3.0


def ackley_5d_2c(grid_size: int = 4096, seed: int = 0) -> TaskDefinition:
    """Ackley-5D-2C on scrambled Sobol points over [-5, 3]^5."""
    m = int(round(math.log2(grid_size)))
    sampler = qmc.Sobol(d=5, scramble=True, seed=seed)
    unit = sampler.random_base2(m) if 2**m == grid_size else sampler.random(grid_size)
    pts = qmc.scale(unit, [ACKLEY_LOWER] * 5, [ACKLEY_UPPER] * 5)
    return make_task(
        "ackley-5d-2c",
        CandidateGrid(pts),
        ackley,
        [ackley_constraint_shell, ackley_constraint_box],
        [0.0, 0.0],
        [NOISE_STD] * 3,
    )


def monte_carlo_feasible_fraction(task: TaskDefinition, lower, upper, n: int, seed: int = 0) -> float:
    """Feasible fraction of a box under uniform sampling, from the oracles."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(lower, upper, size=(n, task.dim))
    mask = np.ones(n, dtype=bool)
    for c, h in zip(task.constraints, task.thresholds):
        mask &= c(x) > h
    return float(np.mean(mask))


def _registry() -> dict:
    reg = {f"rastrigin-1d-1c@{v}": (lambda v=v: rastrigin_1d_1c(v)) for v in RASTRIGIN_SWEEP}
    reg["rastrigin-1d-1c"] = reg["rastrigin-1d-1c@60"]
    reg["ackley-5d-2c"] = ackley_5d_2c
    return reg


TASKS = _registry()


def get_task(name: str) -> TaskDefinition:
    try:
        factory = TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; known: {', '.join(sorted(TASKS))}") from None
    return factory()


def list_tasks() -> list[str]:
    return sorted(TASKS)

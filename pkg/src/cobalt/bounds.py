"""Confidence bounds, the beta schedule and monotone interval intersection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCHEDULED = "scheduled"
CONSTANT = "constant"


def pi_t_quadratic(t: int) -> float:
    """pi_t = pi^2 t^2 / 6, whose reciprocals sum to one over t >= 1."""
    return math.pi**2 * t**2 / 6.0


@dataclass(frozen=True)
class BetaSchedule:
    """Squared confidence multiplier beta_t.

    In scheduled mode ``beta_t = 2 log(2 (K + 1) |D| pi_t / delta)``, a union
    bound over the K + 1 functions, all grid points and all iterations.
    """

    delta: float = 0.1
    num_constraints: int = 1
    grid_size: int = 1
    mode: str = SCHEDULED
    constant_value: float | None = None
    pi_t: object = pi_t_quadratic

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.mode not in (SCHEDULED, CONSTANT):
            raise ValueError(f"unknown beta mode {self.mode!r}")
        if self.mode == CONSTANT and not (self.constant_value and self.constant_value > 0):
            raise ValueError("constant mode needs a positive constant_value")

    def scheduled(self, t: int) -> float:
        return 2.0 * math.log(
            2.0 * (self.num_constraints + 1) * self.grid_size * self.pi_t(t) / self.delta
        )

    def __call__(self, t: int) -> float:
        return beta(self, t)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "num_constraints": self.num_constraints,
            "grid_size": self.grid_size,
            "mode": self.mode,
            "constant_value": self.constant_value,
        }


def beta(schedule: BetaSchedule, t: int) -> float:
    if t < 1:
        raise ValueError("iterations start at t = 1")
    if schedule.mode == CONSTANT:
        return float(schedule.constant_value)
    return schedule.scheduled(t)


def compute_bounds(mean: np.ndarray, std: np.ndarray, beta_value: float):
    """Raw (ucb, lcb) = mean +- sqrt(beta) * std."""
    if not beta_value > 0:
        raise ValueError("beta must be positive")
    half = math.sqrt(beta_value) * np.asarray(std)
    return mean + half, mean - half


@dataclass
class FunctionBounds:
    ucb: np.ndarray
    lcb: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.ucb - self.lcb


@dataclass
class BoundsTable:
    """Bounds for every function at one iteration (index 0 is the objective)."""

    functions: list
    iteration: int = 0
    crossings: int = 0

    def __getitem__(self, g: int) -> FunctionBounds:
        return self.functions[g]

    def __len__(self) -> int:
        return len(self.functions)


def enforce_monotone_arrays(prev_ucb, prev_lcb, ucb, lcb):
    """Intersect one function's interval with its history.

    Returns ``(ucb, lcb, crossings)``.  Where the intersection is empty both
    bounds collapse to the midpoint of the crossed pair.
    """
    new_ucb = np.minimum(ucb, prev_ucb)
    new_lcb = np.maximum(lcb, prev_lcb)
    crossed = new_lcb > new_ucb
    n_cross = int(np.count_nonzero(crossed))
    if n_cross:
        mid = 0.5 * (new_ucb[crossed] + new_lcb[crossed])
        new_ucb[crossed] = mid
        new_lcb[crossed] = mid
    return new_ucb, new_lcb, n_cross


def enforce_monotone(previous: BoundsTable | None, raw) -> BoundsTable:
    """Pointwise intersection of ``raw`` bounds with ``previous``.

    ``raw`` is a sequence of (ucb, lcb) pairs, one per function.  With no
    previous table the raw bounds are returned as iteration 1.
    """
    if previous is None:
        return BoundsTable([FunctionBounds(np.array(u), np.array(l)) for u, l in raw], 1, 0)
    out, total = [], 0
    for prev, (u, l) in zip(previous.functions, raw):
        nu, nl, c = enforce_monotone_arrays(prev.ucb, prev.lcb, np.asarray(u), np.asarray(l))
        out.append(FunctionBounds(nu, nl))
        total += c
    return BoundsTable(out, previous.iteration + 1, total)

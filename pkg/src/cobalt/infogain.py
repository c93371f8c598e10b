"""Mutual information between noisy observations and a GP, and its greedy maximum."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .gp import CandidateGrid, Kernel, cholesky_with_jitter, gram


def info_gain(kernel: Kernel, points: np.ndarray, sigma2: float, name: str = "info_gain") -> float:
    """0.5 * logdet(I + K / sigma2) for the points (rows) in ``points``.

    An empty point set carries no information and returns 0.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0.0
    pts = pts.reshape(pts.shape[0], -1)
    a = np.eye(pts.shape[0]) + gram(kernel, pts, pts) / sigma2
    chol, _ = cholesky_with_jitter(a, name)
    return float(np.sum(np.log(np.diag(chol))))


def info_gain_subset(kernel: Kernel, grid: CandidateGrid, subset: Sequence[int], sigma2: float) -> float:
    """:func:`info_gain` for a subset of grid indices."""
    idx = np.asarray(list(subset), dtype=int)
    return info_gain(kernel, grid.points[idx], sigma2)


def greedy_selection(kernel: Kernel, grid: CandidateGrid, budget: int, sigma2: float):
    """Greedy forward selection of ``budget`` distinct grid points.

    Returns (indices, cumulative gains).  The marginal gain of x given the
    chosen set A is 0.5 * log(1 + var(x | A) / sigma2); ties go to the lowest
    grid index.
    """
    n = len(grid)
    if not 0 <= budget <= n:
        raise ValueError(f"budget must lie in [0, {n}]")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    var = np.full(n, kernel.outputscale, dtype=float)
    rows = np.zeros((budget, n))
    chosen = np.zeros(n, dtype=bool)
    picks, gains, total = [], [], 0.0
    for t in range(budget):
        score = np.where(chosen, -np.inf, var)
        j = int(np.argmax(score))
        v = max(float(var[j]), 0.0)
        total += 0.5 * math.log1p(v / sigma2)
        picks.append(j)
        gains.append(total)
        chosen[j] = True
        # Condition on a noisy observation at j.
        k_row = gram(kernel, grid.points[j : j + 1], grid.points)[0]
        row = (k_row - rows[:t, j] @ rows[:t]) / math.sqrt(v + sigma2)
        rows[t] = row
        var = var - row * row
    return picks, gains


def greedy_max_info_gain(kernel: Kernel, grid: CandidateGrid, budget: int, sigma2: float) -> float:
    """Greedy lower bound on the maximum information gain from ``budget`` points."""
    if budget == 0:
        return 0.0
    _, gains = greedy_selection(kernel, grid, budget, sigma2)
    return gains[-1]


def c1_constant(sigma2: float) -> float:
    """C1 = 8 / log(1 + 1/sigma2)."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    return 8.0 / math.log1p(1.0 / sigma2)

"""Level-set partitions of the grid and regions of interest.

Index sets are boolean masks over the grid.  ``np.flatnonzero`` turns one into
a sorted list of indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import BoundsTable, FunctionBounds

NO_FALLBACK, FALLBACK_CONSTRAINTS, FALLBACK_GRID = 0, 1, 2


def partition_constraint(bounds: FunctionBounds, threshold: float):
    """Split the grid into (S, L, U) masks for one constraint.

    S: lcb > h (feasible with confidence), L: ucb < h (infeasible with
    confidence), U: ucb >= h and lcb <= h (undecided).
    """
    s = bounds.lcb > threshold
    l = bounds.ucb < threshold
    u = (bounds.ucb >= threshold) & (bounds.lcb <= threshold)
    return s, l, u


def objective_threshold(bounds_f: FunctionBounds, s_joint: np.ndarray) -> float:
    """max of lcb_f over the jointly feasible set, or -inf when it is empty."""
    if not np.any(s_joint):
        return -np.inf
    return float(np.max(bounds_f.lcb[s_joint]))


@dataclass
class RegionPartition:
    s: list
    l: list
    u: list
    s_joint: np.ndarray
    roi_constraints: np.ndarray
    roi_objective: np.ndarray
    roi_combined: np.ndarray
    lcb_f_max: float
    thresholds: tuple
    fallback: int = NO_FALLBACK

    @property
    def roi_effective(self) -> np.ndarray:
        """The combined ROI after the empty-set fallback."""
        if self.fallback == NO_FALLBACK:
            return self.roi_combined
        if self.fallback == FALLBACK_CONSTRAINTS:
            return self.roi_constraints
        return np.ones_like(self.roi_combined)


def build_rois(
    bounds: BoundsTable,
    thresholds,
    previous_lcb_f_max: float = -np.inf,
) -> RegionPartition:
    """Derive every level set and ROI from one iteration's bounds.

    ``previous_lcb_f_max`` clamps the objective threshold to a running
    maximum.  If the combined ROI is empty the partition records a fallback to
    the constraint ROI, or to the whole grid if that is empty too.
    """
    thresholds = tuple(float(h) for h in thresholds)
    if len(thresholds) != len(bounds) - 1:
        raise ValueError("one threshold per constraint required")
    n = bounds[0].ucb.shape[0]
    s_list, l_list, u_list = [], [], []
    s_joint = np.ones(n, dtype=bool)
    roi_c = np.ones(n, dtype=bool)
    for k, h in enumerate(thresholds, start=1):
        s, l, u = partition_constraint(bounds[k], h)
        s_list.append(s)
        l_list.append(l)
        u_list.append(u)
        s_joint &= s
        roi_c &= bounds[k].ucb >= h
    fresh = objective_threshold(bounds[0], s_joint)
    lcb_f_max = max(fresh, previous_lcb_f_max)
    if lcb_f_max == -np.inf:
        roi_f = np.ones(n, dtype=bool)
    else:
        roi_f = bounds[0].ucb >= lcb_f_max
    roi = roi_f & roi_c
    if np.any(roi):
        fallback = NO_FALLBACK
    elif np.any(roi_c):
        fallback = FALLBACK_CONSTRAINTS
    else:
        fallback = FALLBACK_GRID
    return RegionPartition(
        s_list, l_list, u_list, s_joint, roi_c, roi_f, roi, lcb_f_max, thresholds, fallback
    )

"""Confidence-bound acquisitions, aspect selection and the cEI baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .bounds import FunctionBounds

log = logging.getLogger(__name__)

OBJECTIVE = 0
NEGATIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AspectProposal:
    """Best candidate for one aspect: 0 is the objective, k >= 1 constraint k."""

    aspect: int
    index: int
    value: float


def aspect_name(aspect: int) -> str:
    return "f" if aspect == OBJECTIVE else f"c{aspect}"


def _masked_argmax(values: np.ndarray, domain: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties.
    masked = np.where(domain, values, -np.inf)
    return int(np.argmax(masked))


def _clamp(value: float, what: str) -> float:
    if value < 0:
        if value < -NEGATIVE_TOLERANCE:
            log.warning("%s acquisition value %.3g < 0, clamped to 0", what, value)
        return 0.0
    return value


def acq_objective(
    bounds_f: FunctionBounds, domain: np.ndarray, lcb_f_max: float, scale: float = 1.0
) -> AspectProposal:
    """Maximize ucb_f - lcb_f_max over ``domain``, or the CI width while the
    threshold is still -inf.

    ``scale`` divides the reported value (not the argmax) so that aspects
    modelled on different output scales compete in standardized units.
    """
    if not np.any(domain):
        raise ValueError("objective domain is empty")
    if np.isfinite(lcb_f_max):
        values = bounds_f.ucb - lcb_f_max
    else:
        values = bounds_f.width
    i = _masked_argmax(values, domain)
    return AspectProposal(OBJECTIVE, i, _clamp(float(values[i]) / scale, "objective"))


def acq_constraint(
    bounds_c: FunctionBounds, undecided: np.ndarray, k: int, scale: float = 1.0
) -> AspectProposal | None:
    """Widest confidence interval inside the undecided set of constraint k."""
    if not np.any(undecided):
        return None
    width = bounds_c.width
    i = _masked_argmax(width, undecided)
    return AspectProposal(k, i, _clamp(float(width[i]) / scale, f"constraint {k}"))


def select_aspect(proposals: Sequence[AspectProposal]) -> AspectProposal:
    """Proposal with the largest value; ties go to the objective, then the
    lowest constraint index."""
    if not proposals:
        raise ValueError("no proposals")
    ordered = sorted(proposals, key=lambda p: p.aspect)
    best = ordered[0]
    for p in ordered[1:]:
        if p.value > best.value:
            best = p
    return best


def expected_improvement(mean, std, best: float) -> np.ndarray:
    """EI for maximization; reduces to max(mean - best, 0) where std == 0."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improve = mean - best
    out = np.maximum(improve, 0.0)
    pos = std > 0
    z = improve[pos] / std[pos]
    out[pos] = improve[pos] * norm.cdf(z) + std[pos] * norm.pdf(z)
    return out


def probability_of_feasibility(means, stds, thresholds) -> np.ndarray:
    """prod_k Phi((mu_k - h_k) / sigma_k) with a step function where sigma_k == 0."""
    pof = None
    for mu, sd, h in zip(means, stds, thresholds):
        mu = np.asarray(mu, dtype=float)
        sd = np.asarray(sd, dtype=float)
        p = (mu > h).astype(float)
        pos = sd > 0
        p[pos] = norm.cdf((mu[pos] - h) / sd[pos])
        pof = p if pof is None else pof * p
    return pof


def cei_values(posteriors, thresholds, best_feasible: float | None) -> np.ndarray:
    """Constrained EI on the grid; PoF alone when no feasible incumbent exists.

    ``posteriors`` is a sequence of PosteriorTable, objective first.
    """
    f_post, c_posts = posteriors[0], posteriors[1:]
    n = f_post.mean.shape[0]
    if c_posts:
        pof = probability_of_feasibility(
            [p.mean for p in c_posts], [p.std for p in c_posts], thresholds
        )
    else:
        pof = np.ones(n)
    if best_feasible is None:
        return pof
    return expected_improvement(f_post.mean, f_post.std, best_feasible) * pof


def cei(posteriors, thresholds, best_feasible: float | None, grid=None) -> int:
    """Grid index maximizing constrained EI (lowest index on ties)."""
    return int(np.argmax(cei_values(posteriors, thresholds, best_feasible)))

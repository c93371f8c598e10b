"""Optimization loops: coupled and decoupled ROI-based search, plus baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import (
    OBJECTIVE,
    AspectProposal,
    acq_constraint,
    acq_objective,
    cei_values,
    select_aspect,
)
from .bounds import CONSTANT, SCHEDULED, BetaSchedule, BoundsTable, FunctionBounds, beta, compute_bounds, enforce_monotone
from .gp import FitSpec, Kernel, NumericalDegeneracyError, Surrogate
from .regions import NO_FALLBACK, RegionPartition, build_rois
from .tasks import INFEASIBLE, TaskDefinition, reward

log = logging.getLogger(__name__)

COUPLED, DECOUPLED = "coupled", "decoupled"
ROI_F, ROI_COMBINED = "roi_f", "roi_combined"
ALL_FUNCTIONS = -1
MODEL_NOISE_FLOOR = 1e-6


@dataclass
class OptimizerConfig:
    """Settings for one trial.

    ``refit_every = 0`` disables hyperparameter fitting.  ``kernels`` pins one
    kernel per function (objective first) instead of the default initial kernel.
    """

    mode: str = COUPLED
    budget: int = 100
    init_design_size: int = 5
    seed: int = 0
    delta: float = 0.1
    beta_mode: str = SCHEDULED
    beta_constant: float | None = None
    refit_every: int = 10
    standardize: bool = True
    monotone: bool = True
    objective_domain: str = ROI_COMBINED
    acquisition_units: str = "raw"
    reset_on_refit: bool = True
    kernel_family: str = "matern52"
    initial_lengthscale: float = 0.2
    fit_spec: FitSpec = field(default_factory=FitSpec)
    kernels: Sequence[Kernel] | None = None

    def __post_init__(self):
        if self.mode not in (COUPLED, DECOUPLED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.init_design_size < 1:
            raise ValueError("init_design_size must be >= 1")
        if self.objective_domain not in (ROI_F, ROI_COMBINED):
            raise ValueError(f"unknown objective domain {self.objective_domain!r}")
        if self.acquisition_units not in ("standardized", "raw"):
            raise ValueError(f"unknown acquisition units {self.acquisition_units!r}")
        if self.beta_mode not in (SCHEDULED, CONSTANT):
            raise ValueError(f"unknown beta mode {self.beta_mode!r}")

    def beta_schedule(self, task: TaskDefinition) -> BetaSchedule:
        return BetaSchedule(
            self.delta, task.num_constraints, len(task.grid), self.beta_mode, self.beta_constant
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fit_spec"] = asdict(self.fit_spec)
        out["kernels"] = None if self.kernels is None else [k.to_dict() for k in self.kernels]
        return out


@dataclass
class TrialRecord:
    """Everything one trial produced, one list entry per iteration t = 1..T."""

    task_name: str
    algorithm: str
    seed: int
    num_constraints: int
    optimum_value: float
    init_indices: list = field(default_factory=list)
    t: list = field(default_factory=list)
    x_indices: list = field(default_factory=list)
    aspects: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    roi_sizes: list = field(default_factory=list)
    u_sizes: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    best_rewards: list = field(default_factory=list)
    simple_regret: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    xstar_in_roi: list = field(default_factory=list)
    eval_counts: list = field(default_factory=list)
    surrogate_counts: list = field(default_factory=list)
    crossings: int = 0
    empty_roi: int = 0
    roi_growth: int = 0
    u_growth: int = 0
    ci_width_final: float = math.nan
    error: str | None = None

    @property
    def budget(self) -> int:
        return len(self.t)

    @property
    def final_regret(self):
        return self.simple_regret[-1] if self.simple_regret else INFEASIBLE

    def alpha_increases(self, tol: float = 0.0) -> list:
        """Iterations t where alpha_t > alpha_{t-1} + tol."""
        a = self.alphas
        return [self.t[i] for i in range(1, len(a)) if a[i] > a[i - 1] + tol]


def init_design(grid_size: int, size: int, rng: np.random.Generator) -> list:
    """``size`` distinct grid indices drawn uniformly without replacement."""
    if size > grid_size:
        raise ValueError(f"init design of {size} points exceeds grid of {grid_size}")
    return [int(i) for i in rng.choice(grid_size, size=size, replace=False)]


def _streams(seed: int, n_functions: int):
    """Independent generators: one for the design, one per function's noise."""
    children = np.random.SeedSequence(seed).spawn(1 + n_functions)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


class _Trial:
    """Shared state of one run: surrogates, noise streams and the record."""

    def __init__(self, task: TaskDefinition, config: OptimizerConfig, algorithm: str, models: bool = True):
        self.task = task
        self.config = config
        self.n_func = task.num_constraints + 1
        self.design_rng, self.noise_rngs = _streams(config.seed, self.n_func)
        self.record = TrialRecord(
            task.name, algorithm, config.seed, task.num_constraints, task.true_optimum[1]
        )
        self.record.eval_counts = [0] * self.n_func
        self.best = INFEASIBLE
        # observed values, used by cEI for its incumbent
        self.y_obs: dict = {}
        self.surrogates: list = []
        if models:
            capacity = config.init_design_size + config.budget + 1
            for g in range(self.n_func):
                self.surrogates.append(
                    Surrogate(
                        self._kernel(g),
                        task.grid,
                        max(task.noise_std[g] ** 2, MODEL_NOISE_FLOOR),
                        standardize=config.standardize,
                        name="f" if g == 0 else f"c{g}",
                        capacity=capacity,
                    )
                )

    def _kernel(self, g: int) -> Kernel:
        if self.config.kernels is not None:
            return self.config.kernels[g]
        pts = self.task.grid.points
        extent = np.ptp(pts, axis=0)
        extent = np.where(extent > 0, extent, 1.0)
        return Kernel(self.config.kernel_family, self.config.initial_lengthscale * extent, 1.0)

    def observe(self, index: int, g: int) -> float:
        y = self.task.evaluate(index, g, self.noise_rngs[g])
        if self.surrogates:
            self.surrogates[g].add(index, y)
        self.y_obs.setdefault(index, {})[g] = y
        return y

    def run_init(self):
        idx = init_design(len(self.task.grid), self.config.init_design_size, self.design_rng)
        self.record.init_indices = idx
        for i in idx:
            for g in range(self.n_func):
                self.observe(i, g)
            self._update_best(i)
        for s in self.surrogates:
            s.restandardize()

    def maybe_refit(self, t: int) -> bool:
        """Refit every surrogate if one is due at iteration t; True if refitted."""
        every = self.config.refit_every
        if every and (t - 1) % every == 0:
            for s in self.surrogates:
                s.refit(self.config.fit_spec)
            return True
        return False

    def _update_best(self, index: int):
        r = reward(index, self.task)
        if r is not INFEASIBLE and (self.best is INFEASIBLE or r > self.best):
            self.best = r
        return r

    def log_row(self, t, index, aspect, obs, alpha, roi_size, u_sizes, beta_t):
        rec = self.record
        r = self._update_best(index)
        rec.t.append(t)
        rec.x_indices.append(int(index))
        rec.aspects.append(aspect)
        rec.observations.append(obs)
        rec.alphas.append(alpha)
        rec.roi_sizes.append(roi_size)
        rec.u_sizes.append(u_sizes)
        rec.rewards.append(r)
        rec.best_rewards.append(self.best)
        rec.simple_regret.append(
            INFEASIBLE if self.best is INFEASIBLE else self.task.true_optimum[1] - self.best
        )
        rec.betas.append(beta_t)

    def finish(self):
        self.record.surrogate_counts = [s.n_obs for s in self.surrogates]
        return self.record


IterationCallback = Callable[[int, BoundsTable, RegionPartition, AspectProposal], None]


def _run_roi(task: TaskDefinition, config: OptimizerConfig, decoupled: bool, callback=None) -> TrialRecord:
    algorithm = "cobalt-decoupled" if decoupled else "cobalt-coupled"
    trial = _Trial(task, config, algorithm)
    rec = trial.record
    schedule = config.beta_schedule(task)
    x_star = task.true_optimum[0]
    prev_bounds: BoundsTable | None = None
    prev_part: RegionPartition | None = None
    lcb_f_max = -np.inf
    try:
        trial.run_init()
        for t in range(1, config.budget + 1):
            if trial.maybe_refit(t) and config.reset_on_refit:
                # Bounds from the old hyperparameters are not confidence
                # bounds under the new ones, so the history restarts.
                prev_bounds, prev_part, lcb_f_max = None, None, -np.inf
            beta_t = beta(schedule, t)
            raw = [compute_bounds(p.mean, p.std, beta_t) for p in (s.posterior() for s in trial.surrogates)]
            if config.monotone:
                bounds = enforce_monotone(prev_bounds, raw)
            else:
                bounds = BoundsTable([FunctionBounds(u, l) for u, l in raw], t, 0)
            bounds.iteration = t
            rec.crossings += bounds.crossings
            part = build_rois(bounds, task.thresholds, lcb_f_max)
            lcb_f_max = part.lcb_f_max
            if part.fallback != NO_FALLBACK:
                rec.empty_roi += 1
            if prev_part is not None:
                if np.any(part.roi_combined & ~prev_part.roi_combined):
                    rec.roi_growth += 1
                if any(np.any(u & ~pu) for u, pu in zip(part.u, prev_part.u)):
                    rec.u_growth += 1
            rec.xstar_in_roi.append(bool(part.roi_combined[x_star]))

            domain = part.roi_objective if config.objective_domain == ROI_F else part.roi_effective
            if not np.any(domain):
                rec.empty_roi += 1
                domain = np.ones_like(domain)
            if config.acquisition_units == "raw":
                scales = [1.0] * trial.n_func
            else:
                scales = [s.scale for s in trial.surrogates]
            proposals = [acq_objective(bounds[0], domain, lcb_f_max, scales[0])]
            for k in range(1, trial.n_func):
                p = acq_constraint(bounds[k], part.u[k - 1], k, scales[k])
                if p is not None:
                    proposals.append(p)
            chosen = select_aspect(proposals)
            if callback is not None:
                callback(t, bounds, part, chosen)
            if t == config.budget:
                roi = part.roi_effective
                width = np.max(bounds[0].ucb[roi]) - np.max(bounds[0].lcb[roi])
                rec.ci_width_final = float(width) / scales[0]

            x = chosen.index
            if decoupled:
                obs = {chosen.aspect: trial.observe(x, chosen.aspect)}
                rec.eval_counts[chosen.aspect] += 1
            else:
                obs = {g: trial.observe(x, g) for g in range(trial.n_func)}
                rec.eval_counts[chosen.aspect] += 1
            trial.log_row(
                t,
                x,
                chosen.aspect,
                obs,
                chosen.value,
                int(np.count_nonzero(part.roi_combined)),
                [int(np.count_nonzero(u)) for u in part.u],
                beta_t,
            )
            prev_bounds, prev_part = bounds, part
    except NumericalDegeneracyError as exc:
        log.error("trial %s seed %d aborted: %s", algorithm, config.seed, exc)
        rec.error = str(exc)
    return trial.finish()


def run_coupled(task: TaskDefinition, config: OptimizerConfig, callback=None) -> TrialRecord:
    """ROI-based constrained BO where a query reveals every function."""
    return _run_roi(task, config, decoupled=False, callback=callback)


def run_decoupled(task: TaskDefinition, config: OptimizerConfig, callback=None) -> TrialRecord:
    """ROI-based constrained BO where only the selected aspect is evaluated."""
    return _run_roi(task, config, decoupled=True, callback=callback)


def _best_feasible_observed(trial: _Trial):
    best = None
    h = trial.task.thresholds
    for obs in trial.y_obs.values():
        if all(obs[k + 1] > h[k] for k in range(len(h))):
            if best is None or obs[0] > best:
                best = obs[0]
    return best


def run_cei(task: TaskDefinition, config: OptimizerConfig) -> TrialRecord:
    """Constrained expected improvement baseline (coupled evaluations).

    The incumbent is the best noisy objective observation among queries whose
    noisy constraint observations all satisfied their thresholds.
    """
    trial = _Trial(task, config, "cei")
    try:
        trial.run_init()
        for t in range(1, config.budget + 1):
            trial.maybe_refit(t)
            posts = [s.posterior() for s in trial.surrogates]
            values = cei_values(posts, task.thresholds, _best_feasible_observed(trial))
            x = int(np.argmax(values))
            obs = {g: trial.observe(x, g) for g in range(trial.n_func)}
            trial.log_row(t, x, ALL_FUNCTIONS, obs, float(values[x]), None, None, None)
    except NumericalDegeneracyError as exc:
        log.error("cei seed %d aborted: %s", config.seed, exc)
        trial.record.error = str(exc)
    return trial.finish()


def run_random(task: TaskDefinition, config: OptimizerConfig) -> TrialRecord:
    """Uniform random search over the grid."""
    trial = _Trial(task, config, "random", models=False)
    trial.run_init()
    for t in range(1, config.budget + 1):
        x = int(trial.design_rng.integers(len(task.grid)))
        obs = {g: trial.observe(x, g) for g in range(trial.n_func)}
        trial.log_row(t, x, ALL_FUNCTIONS, obs, None, None, None, None)
    return trial.finish()


ALGORITHMS = {
    "cobalt-coupled": run_coupled,
    "cobalt-decoupled": run_decoupled,
    "cei": run_cei,
    "random": run_random,
}


def run(task: TaskDefinition, config: OptimizerConfig, algorithm: str) -> TrialRecord:
    try:
        fn = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; known: {', '.join(ALGORITHMS)}") from None
    return fn(task, config)

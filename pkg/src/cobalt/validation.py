"""Empirical checks of the region-of-interest coverage and CI-width guarantees.

Problems are drawn from the GP prior on a small 1D grid, so the surrogate's
kernel and noise model are exactly right.  Validation runs therefore disable
standardization and hyperparameter refits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import CONSTANT, SCHEDULED, BetaSchedule
from .gp import CandidateGrid, Kernel, sample_prior
from .infogain import c1_constant, greedy_max_info_gain
from .optimizer import COUPLED, DECOUPLED, OptimizerConfig, TrialRecord, run
from .tasks import TaskDefinition


@dataclass(frozen=True)
class ProblemSpec:
    """Prior-sampled validation problems: f and c_1..c_K ~ GP(0, k) on [0, 1].

    A draw is rejected and redrawn if no grid point is feasible or if the
    constrained optimum clears some threshold by no more than ``margin``.
    """

    grid_size: int = 100
    num_constraints: int = 1
    lengthscale: float = 0.1
    outputscale: float = 1.0
    kernel_family: str = "matern52"
    noise_std: float = 0.1
    threshold: float = 0.0
    margin: float = 0.1
    max_redraws: int = 1000

    def kernel(self) -> Kernel:
        return Kernel(self.kernel_family, self.lengthscale, self.outputscale)

    def grid(self) -> CandidateGrid:
        return CandidateGrid(np.linspace(0.0, 1.0, self.grid_size)[:, None])


def sample_problem(spec: ProblemSpec, seed: int) -> TaskDefinition:
    """Deterministic draw number ``seed``, with rejection on the margin."""
    grid, kernel = spec.grid(), spec.kernel()
    n_func = spec.num_constraints + 1
    ss = np.random.SeedSequence(seed)
    for attempt, child in enumerate(ss.spawn(spec.max_redraws)):
        seeds = child.generate_state(n_func)
        draws = [sample_prior(kernel, grid, int(s)) for s in seeds]
        f, cs = draws[0], np.array(draws[1:])
        feasible = np.all(cs > spec.threshold, axis=0) if spec.num_constraints else np.ones(len(grid), bool)
        if not np.any(feasible):
            continue
        i_star = int(np.argmax(np.where(feasible, f, -np.inf)))
        if spec.num_constraints and np.min(cs[:, i_star]) - spec.threshold <= spec.margin:
            continue
        return TaskDefinition(
            f"prior-sample-{seed}",
            grid,
            f,
            cs,
            [spec.threshold] * spec.num_constraints,
            [spec.noise_std] * n_func,
            feasibility_margin=spec.margin,
            metadata={"redraws": attempt},
        )
    raise RuntimeError(f"no admissible draw for seed {seed} after {spec.max_redraws} attempts")


@dataclass
class ValidationReport:
    """Aggregated diagnostics of one validation suite."""

    noise_variance: float
    delta: float
    budget: int
    trials: int = 0
    coverage_hits: int = 0
    crossings: int = 0
    empty_roi: int = 0
    alpha_final: list = field(default_factory=list)
    ci_width_final: list = field(default_factory=list)
    gamma_hat: float = math.nan
    beta_final: float = math.nan
    epsilon: float = 0.5
    bound_ratios: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def c1(self) -> float:
        return c1_constant(self.noise_variance)

    @property
    def coverage(self) -> float:
        return self.coverage_hits / self.trials if self.trials else math.nan

    @property
    def budget_bound(self) -> float:
        """beta_T * gamma_T * C1 / eps^2 with the greedy gamma estimate."""
        return self.beta_final * self.gamma_hat * self.c1 / self.epsilon**2

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(c1=self.c1, coverage=self.coverage, budget_bound=self.budget_bound)
        return out


def _config(spec: ProblemSpec, budget: int, delta: float, seed: int, mode: str, beta_constant=None):
    kernels = [spec.kernel()] * (spec.num_constraints + 1)
    return OptimizerConfig(
        mode=mode,
        budget=budget,
        seed=seed,
        delta=delta,
        beta_mode=SCHEDULED if beta_constant is None else CONSTANT,
        beta_constant=beta_constant,
        refit_every=0,
        standardize=False,
        kernels=kernels,
    )


def validate_coverage(
    spec: ProblemSpec = ProblemSpec(),
    trials: int = 50,
    budget: int = 100,
    delta: float = 0.1,
    seed: int = 0,
) -> ValidationReport:
    """Frequency with which x* stays inside the combined ROI at every iteration."""
    report = ValidationReport(spec.noise_std**2, delta, budget)
    for i in range(trials):
        task = sample_problem(spec, seed + i)
        rec = run(task, _config(spec, budget, delta, seed + i, COUPLED), "cobalt-coupled")
        report.trials += 1
        report.coverage_hits += int(rec.error is None and all(rec.xstar_in_roi))
        report.crossings += rec.crossings
        report.empty_roi += rec.empty_roi
        if rec.error is not None:
            report.failures.append(f"trial {i}: {rec.error}")
    return report


def check_chain(rec: TrialRecord) -> list:
    """Violated steps of the CI-width chain for one completed run (empty if none)."""
    failures = []
    if rec.error is not None:
        return [f"run aborted: {rec.error}"]
    bad = rec.alpha_increases()
    if bad:
        failures.append(f"alpha_t increased at t={bad[:5]}")
    if not rec.ci_width_final <= rec.alphas[-1]:
        failures.append(f"final CI width {rec.ci_width_final:.6g} > alpha_T {rec.alphas[-1]:.6g}")
    if rec.roi_growth:
        failures.append(f"ROI grew in {rec.roi_growth} iterations")
    if rec.u_growth:
        failures.append(f"undecided set grew in {rec.u_growth} iterations")
    return failures


def gamma_hat(spec: ProblemSpec, counts) -> float:
    """Sum over functions of the greedy information gain for that function's
    query count (coupled runs pass T for every function)."""
    kernel, grid = spec.kernel(), spec.grid()
    s2 = spec.noise_std**2
    return sum(greedy_max_info_gain(kernel, grid, min(int(n), len(grid)), s2) for n in counts)


def validate_ci_chain(
    spec: ProblemSpec = ProblemSpec(),
    trials: int = 10,
    budget: int = 100,
    delta: float = 0.1,
    seed: int = 0,
    mode: str = COUPLED,
) -> ValidationReport:
    """Run with constant beta = scheduled beta_T and check the CI-width chain.

    The ratio alpha_T / sqrt(C1 beta_T gamma_T / T) is logged per run, not
    asserted, since the greedy gamma estimate is approximate.
    """
    grid = spec.grid()
    schedule = BetaSchedule(delta, spec.num_constraints, len(grid))
    beta_t = schedule(budget)
    report = ValidationReport(spec.noise_std**2, delta, budget, beta_final=beta_t)
    algorithm = "cobalt-decoupled" if mode == DECOUPLED else "cobalt-coupled"
    cache: dict = {}
    for i in range(trials):
        task = sample_problem(spec, seed + i)
        rec = run(task, _config(spec, budget, delta, seed + i, mode, beta_t), algorithm)
        report.trials += 1
        report.crossings += rec.crossings
        report.empty_roi += rec.empty_roi
        for msg in check_chain(rec):
            report.failures.append(f"trial {i}: {msg}")
        if rec.error is not None:
            continue
        counts = [budget] * (spec.num_constraints + 1) if mode == COUPLED else rec.eval_counts
        key = tuple(counts)
        if key not in cache:
            cache[key] = gamma_hat(spec, counts)
        gamma = cache[key]
        report.gamma_hat = gamma
        report.alpha_final.append(rec.alphas[-1])
        report.ci_width_final.append(rec.ci_width_final)
        bound = math.sqrt(report.c1 * beta_t * gamma / budget)
        report.bound_ratios.append(rec.alphas[-1] / bound)
    return report

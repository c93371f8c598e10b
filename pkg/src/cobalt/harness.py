"""Multi-trial experiments: per-trial regret CSVs, a manifest and a summary."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .acquisition import aspect_name
from .bounds import SCHEDULED
from .optimizer import ALGORITHMS, ALL_FUNCTIONS, DECOUPLED, COUPLED, OptimizerConfig, TrialRecord, run
from .tasks import INFEASIBLE, TASKS, TaskDefinition, get_task

log = logging.getLogger(__name__)

SENTINEL = str(INFEASIBLE)


@dataclass
class ExperimentConfig:
    """One experiment: an algorithm run on a task for several seeds.

    ``seeds`` defaults to ``range(trials)``.  Every field is echoed into the
    manifest.
    """

    task: str = "rastrigin-1d-1c@60"
    algorithm: str = "cobalt-coupled"
    trials: int = 15
    budget: int = 2000
    seeds: list | None = None
    delta: float = 0.1
    beta_mode: str = SCHEDULED
    beta_constant: float | None = None
    output_dir: str = "runs/experiment"
    workers: int = 1
    init_design_size: int = 5
    refit_every: int = 10
    standardize: bool = True
    objective_domain: str = "roi_combined"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; known: {', '.join(ALGORITHMS)}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; known: {', '.join(sorted(TASKS))}")
        if self.seeds is None:
            self.seeds = list(range(self.trials))
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) != self.trials:
            raise ValueError("need exactly one seed per trial")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        mode = DECOUPLED if self.algorithm == "cobalt-decoupled" else COUPLED
        return OptimizerConfig(
            mode=mode,
            budget=self.budget,
            init_design_size=self.init_design_size,
            seed=seed,
            delta=self.delta,
            beta_mode=self.beta_mode,
            beta_constant=self.beta_constant,
            refit_every=self.refit_every,
            standardize=self.standardize,
            objective_domain=self.objective_domain,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def fmt(value) -> str:
    """Full-precision decimal for floats; the sentinel and None get fixed tokens."""
    if value is INFEASIBLE:
        return SENTINEL
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _aspect_label(aspect: int) -> str:
    return "all" if aspect == ALL_FUNCTIONS else aspect_name(aspect)


def regret_range(task: TaskDefinition) -> float:
    """f* minus the smallest objective value on the grid (for normalized regret)."""
    span = task.true_optimum[1] - float(np.min(task.objective_values))
    return span if span > 0 else 1.0


def regret_csv(record: TrialRecord, task: TaskDefinition) -> str:
    """Render one trial as CSV text, one row per iteration."""
    k = record.num_constraints
    header = [
        "t", "x_index", "aspect", "reward", "best_reward", "simple_regret",
        "normalized_regret", "alpha_t", "roi_size",
    ] + [f"u_size_{j}" for j in range(1, k + 1)]
    span = regret_range(task)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, t in enumerate(record.t):
        regret = record.simple_regret[i]
        norm = INFEASIBLE if regret is INFEASIBLE else regret / span
        u = record.u_sizes[i] or [None] * k
        writer.writerow(
            [
                fmt(t),
                fmt(record.x_indices[i]),
                _aspect_label(record.aspects[i]),
                fmt(record.rewards[i]),
                fmt(record.best_rewards[i]),
                fmt(regret),
                fmt(norm),
                fmt(record.alphas[i]),
                fmt(record.roi_sizes[i]),
            ]
            + [fmt(v) for v in u]
        )
    return buf.getvalue()


def trial_dir(output_dir, seed: int) -> Path:
    return Path(output_dir) / "trials" / f"seed_{seed:06d}"


def _run_trial(args):
    config, seed = args
    task = get_task(config.task)
    record = run(task, config.optimizer_config(seed), config.algorithm)
    path = trial_dir(config.output_dir, seed)
    path.mkdir(parents=True, exist_ok=True)
    (path / "regret.csv").write_text(regret_csv(record, task))
    return {
        "seed": seed,
        "regret": [None if r is INFEASIBLE else float(r) for r in record.simple_regret],
        "eval_counts": list(record.eval_counts),
        "error": record.error,
        "crossings": record.crossings,
        "empty_roi": record.empty_roi,
    }


def _mean_ci(values: np.ndarray, level: float = 0.95):
    n = values.shape[0]
    mean = float(np.mean(values))
    if n < 2:
        return mean, mean, mean
    sem = float(np.std(values, ddof=1)) / math.sqrt(n)
    half = float(stats.t.ppf(0.5 + level / 2, n - 1)) * sem
    return mean, mean - half, mean + half


def summarize(results: list, budget: int, task: TaskDefinition) -> dict:
    """Per-t mean regret with a 95% t-interval across trials, plus final-regret stats.

    At iterations where some trial has no feasible query yet the mean is
    undefined and reported as the sentinel.
    """
    per_t = []
    for i in range(budget):
        vals = [r["regret"][i] if i < len(r["regret"]) else None for r in results]
        finite = [v for v in vals if v is not None]
        if len(finite) < len(vals):
            per_t.append({"t": i + 1, "mean": SENTINEL, "ci_low": SENTINEL, "ci_high": SENTINEL,
                          "n_finite": len(finite)})
            continue
        mean, lo, hi = _mean_ci(np.asarray(finite))
        per_t.append({"t": i + 1, "mean": mean, "ci_low": lo, "ci_high": hi, "n_finite": len(finite)})
    finals = [r["regret"][-1] if r["regret"] else None for r in results]
    finite_finals = sorted(v for v in finals if v is not None)
    if len(finite_finals) * 2 > len(finals):
        # Sentinels rank above every finite regret.
        padded = finite_finals + [math.inf] * (len(finals) - len(finite_finals))
        median = float(np.median(padded))
    else:
        median = SENTINEL
    out = {
        "task": task.name,
        "true_optimum_index": task.true_optimum[0],
        "true_optimum_value": task.true_optimum[1],
        "feasible_fraction": task.feasible_fraction,
        "trials": len(results),
        "seeds": [r["seed"] for r in results],
        "median_final_regret": median,
        "mean_final_regret": float(np.mean(finite_finals)) if len(finite_finals) == len(finals) else SENTINEL,
        "fraction_reaching_zero": sum(v == 0.0 for v in finite_finals) / len(finals),
        "seeds_reaching_zero": sum(v == 0.0 for v in finite_finals),
        "eval_counts": {str(r["seed"]): r["eval_counts"] for r in results},
        "eval_count_totals": {str(r["seed"]): sum(r["eval_counts"]) for r in results},
        "errors": {str(r["seed"]): r["error"] for r in results if r["error"]},
        "crossings": sum(r["crossings"] for r in results),
        "empty_roi": sum(r["empty_roi"] for r in results),
        "per_t": per_t,
    }
    return out


def manifest(config: ExperimentConfig, task: TaskDefinition) -> dict:
    opt = config.optimizer_config(config.seeds[0]).to_dict()
    opt.pop("seed")
    return {
        "version": __version__,
        "config": config.to_dict(),
        "optimizer": opt,
        "task": task.describe(),
        "prior_mean": "constant (mean of observations at the last refit)" if config.standardize else "zero",
    }


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every trial, write the artifacts and return the summary."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    task = get_task(config.task)
    _dump(out / "manifest.json", manifest(config, task))
    jobs = [(config, s) for s in config.seeds]
    if config.workers == 1:
        results = [_run_trial(j) for j in jobs]
    else:
        workers = min(config.workers, len(jobs))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    summary = summarize(results, config.budget, task)
    _dump(out / "summary.json", summary)
    log.info("%s on %s: median final regret %s", config.algorithm, config.task, summary["median_final_regret"])
    return summary

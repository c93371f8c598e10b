"""Command line entry point: ``python -m cobalt <command>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .gp import Kernel, CandidateGrid
from .harness import ExperimentConfig, run_experiment
from .infogain import c1_constant, greedy_max_info_gain
from .optimizer import ALGORITHMS, DECOUPLED, COUPLED
from .tasks import get_task, list_tasks
from .validation import ProblemSpec, validate_coverage, validate_ci_chain

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("cobalt")


def load_config_file(path: str) -> dict:
    """Read a JSON or TOML config file (by extension; TOML if unknown)."""
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = tomllib.loads(text.decode("utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a table/object")
    return data


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_run(sub):
    p = sub.add_parser("run", help="run a multi-trial experiment")
    p.add_argument("--config", help="JSON or TOML file with ExperimentConfig fields")
    # Flags mirror ExperimentConfig; unset flags do not override the file.
    p.add_argument("--task")
    p.add_argument("--algorithm", choices=sorted(ALGORITHMS))
    p.add_argument("--trials", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--delta", type=float)
    p.add_argument("--beta-mode", dest="beta_mode", choices=["scheduled", "constant"])
    p.add_argument("--beta-constant", dest="beta_constant", type=float)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--init-design-size", dest="init_design_size", type=int)
    p.add_argument("--refit-every", dest="refit_every", type=int)
    p.add_argument("--standardize", type=_bool)
    p.add_argument("--objective-domain", dest="objective_domain", choices=["roi_f", "roi_combined"])


def _add_validate(sub):
    p = sub.add_parser("validate", help="run the coverage and CI-width validation suites")
    p.add_argument("--suite", choices=["coverage", "chain", "chain-decoupled", "all"], default="all")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--num-constraints", type=int, default=1)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--min-coverage", type=float, default=0.82)
    p.add_argument("--json", dest="json_out", help="write the reports to this file")


def _add_info_gain(sub):
    p = sub.add_parser("info-gain", help="greedy information-gain estimate on a 1D grid")
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--lengthscale", type=float, default=0.1)
    p.add_argument("--outputscale", type=float, default=1.0)
    p.add_argument("--kernel", choices=["matern52", "se"], default="matern52")
    p.add_argument("--noise-variance", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cobalt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_validate(sub)
    sub.add_parser("tasks", help="list registered tasks")
    _add_info_gain(sub)
    return parser


def experiment_config(args) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    if "seeds" in data and "trials" not in data:
        data["trials"] = len(data["seeds"])
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    config = experiment_config(args)
    summary = run_experiment(config)
    print(
        f"{config.algorithm} on {config.task}: {summary['trials']} trials, "
        f"median final regret {summary['median_final_regret']}, "
        f"{summary['seeds_reaching_zero']} reached 0; output in {config.output_dir}"
    )
    return 0


def cmd_validate(args) -> int:
    spec = ProblemSpec(grid_size=args.grid_size, num_constraints=args.num_constraints, margin=args.margin)
    reports, ok = {}, True
    common = dict(spec=spec, trials=args.trials, budget=args.budget, delta=args.delta, seed=args.seed)
    if args.suite in ("coverage", "all"):
        r = validate_coverage(**common)
        passed = r.passed and r.coverage >= args.min_coverage
        ok &= passed
        reports["coverage"] = r.to_dict()
        print(f"coverage {r.coverage:.3f} (min {args.min_coverage}) {'PASS' if passed else 'FAIL'}")
    for name, mode in (("chain", COUPLED), ("chain-decoupled", DECOUPLED)):
        if args.suite not in (name, "all"):
            continue
        r = validate_ci_chain(mode=mode, **common)
        ok &= r.passed
        reports[name] = r.to_dict()
        print(f"{name}: {r.trials} runs, {len(r.failures)} violations {'PASS' if r.passed else 'FAIL'}")
        for msg in r.failures:
            print(f"  {msg}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(reports, indent=2, default=str) + "\n")
    return 0 if ok else 1


def cmd_tasks(args) -> int:
    for name in list_tasks():
        d = get_task(name).describe()
        print(f"{name:22s} dim={d['dim']} grid={d['grid_size']} K={d['num_constraints']} "
              f"feasible={d['feasible_fraction']:.3f} f*={d['true_optimum_value']:.6g}")
    return 0


def cmd_info_gain(args) -> int:
    grid = CandidateGrid(np.linspace(0.0, 1.0, args.grid_size)[:, None])
    kernel = Kernel(args.kernel, args.lengthscale, args.outputscale)
    gamma = greedy_max_info_gain(kernel, grid, min(args.budget, len(grid)), args.noise_variance)
    print(f"greedy gamma_T = {gamma:.10g}  C1 = {c1_constant(args.noise_variance):.10g}")
    return 0


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "tasks": cmd_tasks, "info-gain": cmd_info_gain}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest

from cobalt.gp import CandidateGrid, Kernel
from cobalt.optimizer import (
    ALL_FUNCTIONS,
    OptimizerConfig,
    init_design,
    run,
    run_coupled,
    run_decoupled,
)
from cobalt.tasks import INFEASIBLE, TaskDefinition, simple_regret_curve
from cobalt.validation import ProblemSpec, sample_problem

SPEC = ProblemSpec(grid_size=60)


def small_task(seed=0):
    return sample_problem(SPEC, seed)


def config(**kw):
    base = dict(budget=30, seed=0, refit_every=0, standardize=False, kernels=[SPEC.kernel()] * 2)
    base.update(kw)
    return OptimizerConfig(**base)


def test_budget_one():
    rec = run(small_task(), config(budget=1, init_design_size=1), "cobalt-coupled")
    assert rec.budget == 1 and len(rec.x_indices) == 1 and len(rec.alphas) == 1


def test_init_design_distinct_and_permutation():
    rng = np.random.default_rng(3)
    idx = init_design(50, 20, rng)
    assert len(set(idx)) == 20 and all(0 <= i < 50 for i in idx)
    assert sorted(init_design(7, 7, np.random.default_rng(1))) == list(range(7))
    assert init_design(50, 5, np.random.default_rng(9)) == init_design(50, 5, np.random.default_rng(9))
    with pytest.raises(ValueError):
        init_design(3, 4, rng)


def test_coupled_counts():
    rec = run_coupled(small_task(), config())
    assert rec.surrogate_counts == [5 + 30, 5 + 30]
    assert sum(rec.eval_counts) == 30


def test_decoupled_counts():
    rec = run_decoupled(small_task(), config())
    assert sum(rec.surrogate_counts) == 5 * 2 + 30
    assert sum(rec.eval_counts) == 30
    for g, n in enumerate(rec.eval_counts):
        assert rec.surrogate_counts[g] == 5 + n
    for obs, aspect in zip(rec.observations, rec.aspects):
        assert list(obs) == [aspect]


def test_unconstrained_decoupled_equals_coupled():
    grid = CandidateGrid(np.linspace(0, 1, 40))
    task = TaskDefinition("k0", grid, np.sin(6 * grid.points[:, 0]), np.zeros((0, 40)), [], [0.1])
    cfg = OptimizerConfig(budget=25, refit_every=0, standardize=False, kernels=[SPEC.kernel()])
    a, b = run_coupled(task, cfg), run_decoupled(task, cfg)
    assert a.x_indices == b.x_indices and a.alphas == b.alphas
    assert a.observations == b.observations


@pytest.mark.parametrize("algorithm", ["cobalt-coupled", "cobalt-decoupled", "cei", "random"])
def test_deterministic_per_seed(algorithm):
    task = small_task()
    a = run(task, config(seed=4), algorithm)
    b = run(task, config(seed=4), algorithm)
    assert a.x_indices == b.x_indices and a.observations == b.observations
    assert a.simple_regret == b.simple_regret


def test_different_seeds_differ():
    task = small_task()
    a = run(task, config(seed=1), "random")
    b = run(task, config(seed=2), "random")
    assert a.x_indices != b.x_indices


def test_first_iteration_uses_width_branch():
    seen = {}

    def cb(t, bounds, part, chosen):
        seen.setdefault(t, (part.lcb_f_max, chosen, bounds))

    # Constraint values barely above the threshold: no point is certified
    # feasible after a single noisy observation.
    grid = CandidateGrid(np.linspace(0, 1, 60))
    x = grid.points[:, 0]
    task = TaskDefinition("toy", grid, np.cos(4 * x), [0.05 + 0.0 * x], [0.0], [0.1, 0.1])
    run_coupled(task, config(budget=3, init_design_size=1), callback=cb)
    lmax, chosen, bounds = seen[1]
    assert lmax == -np.inf
    if chosen.aspect == 0:
        i = chosen.index
        assert chosen.value == pytest.approx(bounds[0].ucb[i] - bounds[0].lcb[i])


def test_final_ci_within_alpha():
    for seed in range(3):
        rec = run_coupled(small_task(seed), config(seed=seed, budget=60))
        assert rec.error is None
        assert rec.ci_width_final <= rec.alphas[-1] + 1e-12


def test_regret_record_consistent_with_task():
    task = small_task()
    rec = run_coupled(task, config())
    assert rec.simple_regret == simple_regret_curve(rec, task)
    for r, rr in zip(rec.rewards, rec.x_indices):
        assert (r is INFEASIBLE) == (not task.feasible_mask[rr])


def test_baselines_log_all_functions():
    rec = run(small_task(), config(), "cei")
    assert set(rec.aspects) == {ALL_FUNCTIONS}
    assert all(len(o) == 2 for o in rec.observations)


def test_refit_path_runs():
    rec = run(small_task(), config(refit_every=10, standardize=True, kernels=None), "cobalt-coupled")
    assert rec.error is None and rec.budget == 30


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        run(small_task(), config(), "pesc")


@pytest.mark.parametrize(
    "kw", [dict(budget=0), dict(mode="nope"), dict(acquisition_units="weird"), dict(objective_domain="x")]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_default_kernels_scaled_to_grid_extent():
    grid = CandidateGrid(np.linspace(-4, 6, 30))
    x = grid.points[:, 0]
    task = TaskDefinition("wide", grid, -x**2, [1 - 0.1 * x], [0.0], [0.1, 0.1])
    cfg = OptimizerConfig(budget=2, refit_every=0)
    from cobalt.optimizer import _Trial

    trial = _Trial(task, cfg, "cobalt-coupled")
    k = trial.surrogates[0].kernel
    assert isinstance(k, Kernel)
    np.testing.assert_allclose(k.lengthscale, 0.2 * 10.0)

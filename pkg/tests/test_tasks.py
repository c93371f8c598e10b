import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from cobalt.gp import CandidateGrid
from cobalt.tasks import (
    ACKLEY_LOWER,
    ACKLEY_UPPER,
    INFEASIBLE,
    RASTRIGIN_SWEEP,
    Infeasible,
    TaskDefinition,
    ackley,
    ackley_5d_2c,
    ackley_constraint_box,
    ackley_constraint_shell,
    best_reward_series,
    get_task,
    list_tasks,
    make_task,
    monte_carlo_feasible_fraction,
    ppf_threshold,
    rastrigin,
    rastrigin_1d_1c,
    rastrigin_constraint,
    reward,
    simple_regret_curve,
)


def toy_task(margin=0.0):
    grid = CandidateGrid(np.arange(5.0))
    return TaskDefinition(
        "toy", grid, [1.0, 5.0, 3.0, 4.0, 2.0], [[1, -1, 1, 1, 0]], [0.0], [0.1, 0.1], margin
    )


def test_rastrigin_origin():
    assert rastrigin(np.zeros((1, 1)))[0] == 0.0


def test_rastrigin_formula():
    x = np.array([[0.3], [-2.2]])
    expected = [-10 - (v**2 - 10 * math.cos(2 * math.pi * v)) for v in (0.3, -2.2)]
    np.testing.assert_allclose(rastrigin(x), expected, rtol=1e-14)


def test_rastrigin_sqrt2_feasible_fraction():
    task = rastrigin_1d_1c(60)
    assert len(task.grid) == 1000
    assert task.thresholds == (math.sqrt(2),)
    assert abs(task.feasible_fraction - 0.60) <= 0.01


def test_rastrigin_constrained_optimum_near_two():
    task = rastrigin_1d_1c(60)
    idx, val = task.true_optimum
    assert abs(task.grid.points[idx, 0] - 2.0) < 0.02
    assert val == pytest.approx(-4.0, abs=0.05)
    # Recomputed by brute force from the oracles.
    f = rastrigin(task.grid.points)
    c = rastrigin_constraint(task.grid.points)
    feas = c > math.sqrt(2)
    assert idx == int(np.argmax(np.where(feas, f, -np.inf)))


@pytest.mark.parametrize("variant", RASTRIGIN_SWEEP)
def test_sweep_variant_fractions(variant):
    task = rastrigin_1d_1c(variant)
    assert abs(task.feasible_fraction - variant / 100) <= 0.01
    assert task.noise_std == (0.1, 0.1)


def test_unknown_variant():
    with pytest.raises(ValueError):
        rastrigin_1d_1c(33)


def test_ackley_origin_and_sign():
    assert ackley(np.zeros((1, 5)))[0] == pytest.approx(0.0, abs=1e-12)
    x = np.random.default_rng(0).uniform(-5, 3, size=(100, 5))
    assert np.all(ackley(x) < 0)


def test_ackley_box_boundary():
    assert ackley_constraint_box(np.full((1, 5), 2.9))[0] > 0
    assert ackley_constraint_box(np.full((1, 5), 3.0))[0] == 0.0
    task = ackley_5d_2c()
    assert task.thresholds == (0.0, 0.0)
    # c = 0 is not strictly above the threshold.
    assert not ackley_constraint_box(np.full((1, 5), 3.0))[0] > task.thresholds[1]


def test_ackley_shell_formula():
    x = np.array([[1.0, 1, 1, 1, 1], [0, 0, 0, 0, 0]])
    expected = [(0 - 5.5) ** 2 - 1, (math.sqrt(5) - 5.5) ** 2 - 1]
    np.testing.assert_allclose(ackley_constraint_shell(x), expected, rtol=1e-14)


def test_ackley_grid_and_fraction():
    task = ackley_5d_2c()
    assert len(task.grid) == 4096 and task.dim == 5
    assert task.grid.points.min() >= ACKLEY_LOWER and task.grid.points.max() <= ACKLEY_UPPER
    frac = monte_carlo_feasible_fraction(task, ACKLEY_LOWER, ACKLEY_UPPER, 200_000, seed=1)
    assert abs(frac - 0.14) <= 0.03


def test_reward_feasible_infeasible_boundary():
    task = toy_task()
    assert reward(0, task) == 1.0
    assert reward(1, task) is INFEASIBLE
    assert reward(4, task) is INFEASIBLE  # c == h exactly


def test_sentinel_is_not_numeric():
    with pytest.raises(TypeError):
        INFEASIBLE + 1.0
    with pytest.raises(TypeError):
        INFEASIBLE < 1.0
    assert str(INFEASIBLE) == "inf_regret"
    assert isinstance(INFEASIBLE, Infeasible)


def test_true_optimum_and_margin_assertion():
    task = toy_task()
    assert task.true_optimum == (3, 4.0)
    with pytest.raises(ValueError):
        toy_task(margin=1.0)


def test_no_feasible_point_rejected():
    grid = CandidateGrid(np.arange(3.0))
    with pytest.raises(ValueError):
        TaskDefinition("none", grid, [1, 2, 3], [[-1, -1, -1]], [0.0], [0.1, 0.1])


@pytest.mark.parametrize(
    "h,sigma,mu,expected",
    [(0.0, 1.0, 0.5, 0.0), (0.0, 1.0, 0.975, 1.959963984540054), (3.0, 2.0, 0.5, 3.0)],
)
def test_ppf_threshold(h, sigma, mu, expected):
    assert ppf_threshold(h, sigma, mu) == pytest.approx(expected, abs=1e-12)


def test_ppf_threshold_series_oracle():
    # Acklam-free check: bisection on the normal CDF from math.erf.
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < 0.975:
            lo = mid
        else:
            hi = mid
    assert ppf_threshold(0.0, 1.0, 0.975) == pytest.approx(lo, abs=1e-12)


@pytest.mark.parametrize("mu", [0.0, 1.0, -0.1])
def test_ppf_threshold_rejects(mu):
    with pytest.raises(ValueError):
        ppf_threshold(0.0, 1.0, mu)


def record(indices, init=()):
    return SimpleNamespace(x_indices=list(indices), init_indices=list(init))


def test_regret_first_query_optimum_all_zeros():
    task = toy_task()
    assert simple_regret_curve(record([3, 0, 2]), task) == [0.0, 0.0, 0.0]


def test_regret_no_feasible_all_sentinel():
    task = toy_task()
    assert simple_regret_curve(record([1, 4, 1]), task) == [INFEASIBLE] * 3


def test_regret_hand_computed():
    task = toy_task()
    assert simple_regret_curve(record([1, 0, 2, 4, 3]), task) == [INFEASIBLE, 3.0, 1.0, 1.0, 0.0]


def test_regret_counts_init_design():
    task = toy_task()
    assert simple_regret_curve(record([1], init=[2]), task) == [1.0]


@settings(max_examples=100)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_regret_non_increasing_and_zero_iff_optimum(indices):
    task = toy_task()
    curve = simple_regret_curve(record(indices), task)
    finite = [c for c in curve if c is not INFEASIBLE]
    # Sentinels only at the start, then non-increasing.
    assert curve[len(curve) - len(finite):] == finite
    assert all(a >= b for a, b in zip(finite, finite[1:]))
    best = best_reward_series(indices, task)[-1]
    assert (curve[-1] == 0.0) == (best == task.true_optimum[1])


def test_registry():
    names = list_tasks()
    assert "rastrigin-1d-1c@60" in names and "ackley-5d-2c" in names
    assert get_task("rastrigin-1d-1c").thresholds == get_task("rastrigin-1d-1c@60").thresholds
    with pytest.raises(ValueError):
        get_task("vessel-4d-3c")


def test_make_task_evaluate_noise():
    task = make_task("m", CandidateGrid(np.linspace(-1, 1, 5)), lambda x: x[:, 0], [lambda x: 1 - x[:, 0] ** 2], [0.0], [0.0, 0.5])
    assert task.evaluate(4, 0, np.random.default_rng(0)) == 1.0
    noisy = [task.evaluate(2, 1, np.random.default_rng(s)) for s in range(2000)]
    assert np.std(noisy) == pytest.approx(0.5, rel=0.1)

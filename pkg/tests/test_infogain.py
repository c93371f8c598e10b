import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cobalt.gp import CandidateGrid, Kernel, gram
from cobalt.infogain import (
    c1_constant,
    greedy_max_info_gain,
    greedy_selection,
    info_gain,
    info_gain_subset,
)

K = Kernel("matern52", 0.3, 1.0)


def dense_gain(kernel, pts, s2):
    """Oracle: 0.5 * logdet via numpy slogdet."""
    pts = np.asarray(pts, float).reshape(len(pts), -1)
    sign, logdet = np.linalg.slogdet(np.eye(len(pts)) + gram(kernel, pts, pts) / s2)
    assert sign > 0
    return 0.5 * logdet


def test_single_point_unit_noise():
    assert info_gain(K, [[0.5]], 1.0) == pytest.approx(0.5 * math.log(2), rel=1e-14)
    assert info_gain(K, [[0.5]], 1.0) == pytest.approx(0.34657, abs=1e-5)


def test_empty_set():
    assert info_gain(K, np.zeros((0, 1)), 0.1) == 0.0
    assert greedy_max_info_gain(K, CandidateGrid(np.linspace(0, 1, 5)), 0, 0.1) == 0.0


@pytest.mark.parametrize("kernel,dim", [(K, 1), (Kernel("se", [0.2, 0.7], 2.5), 2)])
def test_matches_dense_determinant(kernel, dim):
    pts = np.random.default_rng(0).uniform(size=(4, dim))
    assert info_gain(kernel, pts, 0.04) == pytest.approx(dense_gain(kernel, pts, 0.04), rel=1e-10)


def test_greedy_first_step_closed_form():
    grid = CandidateGrid(np.linspace(0, 1, 11))
    picks, gains = greedy_selection(K, grid, 1, 0.01)
    assert picks == [0]  # all variances equal, lowest index wins
    assert gains[0] == pytest.approx(0.5 * math.log1p(1.0 / 0.01), rel=1e-14)


def test_greedy_full_budget_equals_whole_grid():
    grid = CandidateGrid(np.linspace(0, 1, 12))
    picks, gains = greedy_selection(K, grid, 12, 0.05)
    assert sorted(picks) == list(range(12))
    assert gains[-1] == pytest.approx(dense_gain(K, grid.points, 0.05), rel=1e-9)


def test_greedy_steps_are_argmax_of_exact_gain():
    grid = CandidateGrid(np.linspace(0, 1, 9))
    s2 = 0.02
    picks, gains = greedy_selection(K, grid, 5, s2)
    chosen = []
    for step, p in enumerate(picks):
        cand = {j: dense_gain(K, grid.points[chosen + [j]], s2) for j in range(9) if j not in chosen}
        best = max(cand.values())
        assert cand[p] == pytest.approx(best, rel=1e-9)
        chosen.append(p)
        assert gains[step] == pytest.approx(dense_gain(K, grid.points[chosen], s2), rel=1e-9)


def test_greedy_near_exhaustive_maximum():
    grid = CandidateGrid(np.linspace(0, 1, 6))
    s2 = 0.1
    exact = max(info_gain_subset(K, grid, c, s2) for c in itertools.combinations(range(6), 3))
    greedy = greedy_max_info_gain(K, grid, 3, s2)
    assert greedy <= exact + 1e-12
    assert greedy >= (1 - 1 / math.e) * exact


def test_monotone_in_budget():
    grid = CandidateGrid(np.linspace(0, 1, 30))
    _, gains = greedy_selection(K, grid, 30, 0.01)
    assert all(b >= a for a, b in zip(gains, gains[1:]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_submodularity_exhaustive(seed):
    rng = np.random.default_rng(seed)
    grid = CandidateGrid(rng.uniform(size=8))
    s2 = 0.05
    gain = {}
    for r in range(9):
        for c in itertools.combinations(range(8), r):
            gain[frozenset(c)] = info_gain_subset(K, grid, sorted(c), s2)
    # F(A + x) - F(A) >= F(B + x) - F(B) whenever A is a subset of B.
    sets = list(gain)
    for _ in range(300):
        b = sets[rng.integers(len(sets))]
        a = frozenset(i for i in b if rng.random() < 0.5)
        rest = [x for x in range(8) if x not in b]
        if not rest:
            continue
        x = rest[rng.integers(len(rest))]
        assert gain[a | {x}] - gain[a] >= gain[b | {x}] - gain[b] - 1e-10
    assert all(gain[s] >= 0 for s in sets)


def test_c1_constant():
    assert c1_constant(1.0) == pytest.approx(8 / math.log(2), rel=1e-14)
    assert c1_constant(1.0) == pytest.approx(11.5416, abs=1e-4)
    with pytest.raises(ValueError):
        c1_constant(0.0)


def test_invalid_inputs():
    grid = CandidateGrid(np.linspace(0, 1, 4))
    with pytest.raises(ValueError):
        greedy_selection(K, grid, 5, 0.1)
    with pytest.raises(ValueError):
        info_gain(K, [[0.0]], 0.0)

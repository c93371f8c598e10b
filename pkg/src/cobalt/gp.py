"""Exact Gaussian process regression over a finite candidate grid.

All surrogates in this package live on a fixed :class:`CandidateGrid`; every
observation is attached to a grid index.  That lets :class:`Surrogate` keep the
pointwise posterior over the whole grid up to date with an O(n * N) update per
observation instead of re-solving from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

MATERN52 = "matern52"
SQUARED_EXPONENTIAL = "se"
KERNEL_FAMILIES = (MATERN52, SQUARED_EXPONENTIAL)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
STD_FLOOR = 1e-6


class NumericalDegeneracyError(RuntimeError):
    """Raised when a covariance matrix cannot be factorized even with jitter."""


@dataclass(frozen=True)
class CandidateGrid:
    """Finite discretization of the search space, one row per candidate."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("grid must be a non-empty (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Kernel:
    """Stationary covariance function.

    Parameters
    ----------
    family : {"matern52", "se"}
    lengthscale : array of positive floats, one per input dimension
    outputscale : positive float, the prior variance k(x, x)
    """

    family: str = MATERN52
    lengthscale: np.ndarray = field(default_factory=lambda: np.ones(1))
    outputscale: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float)).copy()
        if ls.ndim != 1 or np.any(~(ls > 0)) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscale must be positive and finite")
        if not (self.outputscale > 0 and math.isfinite(self.outputscale)):
            raise ValueError("outputscale must be positive and finite")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscale", ls)
        object.__setattr__(self, "outputscale", float(self.outputscale))

    @property
    def dim(self) -> int:
        return self.lengthscale.shape[0]

    def with_params(self, log_lengthscale, log_outputscale) -> "Kernel":
        return Kernel(self.family, np.exp(log_lengthscale), float(np.exp(log_outputscale)))

    def scaled(self, factor: float) -> "Kernel":
        """Same kernel with the outputscale multiplied by ``factor``."""
        return replace(self, outputscale=self.outputscale * factor)

    def from_sqdist(self, r2: np.ndarray) -> np.ndarray:
        if self.family == SQUARED_EXPONENTIAL:
            return self.outputscale * np.exp(-0.5 * r2)
        r = np.sqrt(5.0 * r2)
        return self.outputscale * (1.0 + r + r * r / 3.0) * np.exp(-r)

    def __call__(self, a, b) -> np.ndarray:
        return gram(self, a, b)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "lengthscale": [float(v) for v in self.lengthscale],
            "outputscale": self.outputscale,
        }


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None] if dim == 1 else pts[None, :]
    if pts.shape[1] != dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, kernel expects {dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("coordinates must be finite")
    return pts


def gram(kernel: Kernel, points_a, points_b) -> np.ndarray:
    """Matrix of pairwise kernel values between two coordinate lists."""
    a = _as_points(points_a, kernel.dim)
    same = points_b is points_a
    b = a if same else _as_points(points_b, kernel.dim)
    if not same and a.shape == b.shape and np.array_equal(a, b):
        same = True
    r2 = cdist(a / kernel.lengthscale, b / kernel.lengthscale, "sqeuclidean")
    k = kernel.from_sqdist(r2)
    if same:
        # cdist is already symmetric; this makes it bit-exact regardless.
        k = 0.5 * (k + k.T)
    return k


def cholesky_with_jitter(a: np.ndarray, name: str = "gp") -> tuple[np.ndarray, float]:
    """Cholesky factor of ``a + jitter * I`` under the escalating jitter policy.

    A plain factorization is tried first.  On failure jitter starts at
    1e-10 * mean(diag) and grows by 10x up to 1e-4 * mean(diag).
    """
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    if not scale > 0:
        scale = 1.0
    jitter = JITTER_START * scale
    eye = np.eye(a.shape[0])
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalDegeneracyError(
        f"{name}: covariance not positive definite after jitter {JITTER_MAX:g} * mean(diag)"
    )


@dataclass
class ObservationSet:
    """Noisy observations attached to grid indices."""

    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    noise_variance: float = 1.0

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have equal length")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class PosteriorTable:
    """Pointwise posterior mean and standard deviation over the grid."""

    mean: np.ndarray
    std: np.ndarray
    iteration: int = 0


def posterior(
    kernel: Kernel,
    obs: ObservationSet,
    grid: CandidateGrid,
    prior_mean: float = 0.0,
    name: str = "gp",
) -> PosteriorTable:
    """Batch posterior over every grid point (direct Cholesky solve)."""
    n_grid = len(grid)
    if len(obs) == 0:
        return PosteriorTable(
            np.full(n_grid, float(prior_mean)), np.full(n_grid, math.sqrt(kernel.outputscale)), 0
        )
    idx = np.asarray(obs.points, dtype=int)
    y = np.asarray(obs.values, dtype=float) - prior_mean
    x_obs = grid.points[idx]
    k_oo = gram(kernel, x_obs, x_obs) + obs.noise_variance * np.eye(len(idx))
    chol, _ = cholesky_with_jitter(k_oo, name)
    k_og = gram(kernel, x_obs, grid.points)
    v = solve_triangular(chol, k_og, lower=True)
    w = solve_triangular(chol, y, lower=True)
    mean = prior_mean + v.T @ w
    var = kernel.outputscale - np.einsum("ij,ij->j", v, v)
    return PosteriorTable(mean, np.sqrt(np.clip(var, 0.0, None)), len(idx))


def _grouped(points: Sequence[int], values: Sequence[float]):
    """Collapse repeated grid indices into (unique, counts, means, within-SS)."""
    idx = np.asarray(points, dtype=int)
    y = np.asarray(values, dtype=float)
    uniq, inverse, counts = np.unique(idx, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=y)
    means = sums / counts
    ss = np.bincount(inverse, weights=(y - means[inverse]) ** 2)
    return uniq, counts, means, ss


class _LMLProblem:
    """Pre-grouped data for repeated marginal-likelihood evaluations.

    Repeated observations at one location are replaced by their mean with
    noise sigma^2 / n; the dropped within-group terms are added back as a
    constant, so the value equals the full n-observation log evidence.
    """

    def __init__(self, grid_points, points, values, noise_variance, prior_mean=0.0):
        uniq, counts, means, ss = _grouped(points, values)
        self.y = means - prior_mean
        self.noise = noise_variance / counts
        x = grid_points[uniq]
        self.sqdiff = (x[:, None, :] - x[None, :, :]) ** 2
        n_rep = counts - 1
        self.const = float(
            -0.5 * np.sum(n_rep) * math.log(2 * math.pi * noise_variance)
            - 0.5 * np.sum(np.log(counts))
            - 0.5 * np.sum(ss) / noise_variance
        )

    def __call__(self, kernel: Kernel, name: str = "gp") -> float:
        r2 = self.sqdiff @ (1.0 / kernel.lengthscale**2)
        k = kernel.from_sqdist(r2)
        k[np.diag_indices_from(k)] += self.noise
        chol, _ = cholesky_with_jitter(k, name)
        alpha = solve_triangular(chol, self.y, lower=True)
        n = len(self.y)
        return float(
            -0.5 * alpha @ alpha
            - np.sum(np.log(np.diag(chol)))
            - 0.5 * n * math.log(2 * math.pi)
            + self.const
        )


def log_marginal_likelihood(
    kernel: Kernel,
    obs: ObservationSet,
    grid: CandidateGrid,
    prior_mean: float = 0.0,
    name: str = "gp",
) -> float:
    """log N(y | prior_mean, K + sigma^2 I) for the observations in ``obs``."""
    if len(obs) == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    problem = _LMLProblem(grid.points, obs.points, obs.values, obs.noise_variance, prior_mean)
    return problem(kernel, name)


def sample_prior(kernel: Kernel, grid: CandidateGrid, seed: int) -> np.ndarray:
    """One draw from N(0, Gram(grid) + jitter), deterministic per seed."""
    return sample_prior_batch(kernel, grid, [seed])[0]


def sample_prior_batch(kernel: Kernel, grid: CandidateGrid, seeds: Sequence[int]) -> np.ndarray:
    """Rows are :func:`sample_prior` draws for each seed; factorizes once."""
    chol, _ = cholesky_with_jitter(gram(kernel, grid.points, grid.points), "prior")
    z = np.array([np.random.default_rng(s).standard_normal(len(grid)) for s in seeds])
    return z @ chol.T


@dataclass(frozen=True)
class FitSpec:
    """Search settings for :func:`fit_hyperparameters`.

    A ``lattice_points`` x ``lattice_points`` lattice of log-offsets in
    [-half_width, half_width] is scanned around the incumbent (lengthscales
    shifted together, outputscale separately); the best lattice point is then
    refined coordinate-wise by bounded scalar search over +-1 lattice step.
    """

    lattice_points: int = 7
    half_width: float = 3.0
    golden_steps: int = 20
    log_bounds: tuple = (-8.0, 8.0)


def fit_hyperparameters(state: "Surrogate", spec: FitSpec = FitSpec()) -> Kernel:
    """Return the visited kernel with the highest log marginal likelihood.

    Works in the surrogate's standardized units.  The incumbent kernel is the
    lattice centre, so the result is never worse than it.  Falls back to the
    incumbent if there are fewer than two observations or every candidate is
    numerically degenerate.
    """
    incumbent = state.kernel
    if state.n_obs < 2:
        return incumbent
    y = (np.asarray(state.values) - state.offset) / state.scale
    problem = _LMLProblem(state.grid.points, state.indices, y, state.noise_variance / state.scale**2)
    lo_b, hi_b = spec.log_bounds
    base = np.concatenate([np.log(incumbent.lengthscale), [math.log(incumbent.outputscale)]])
    cache: dict = {}

    def score(theta: np.ndarray) -> float:
        theta = np.clip(theta, lo_b, hi_b)
        key = tuple(np.round(theta, 12))
        if key not in cache:
            try:
                cache[key] = (problem(incumbent.with_params(theta[:-1], theta[-1])), theta.copy())
            except NumericalDegeneracyError:
                cache[key] = (-math.inf, theta.copy())
        return cache[key][0]

    best_val = score(base)
    best = np.clip(base, lo_b, hi_b)
    offsets = np.linspace(-spec.half_width, spec.half_width, spec.lattice_points)
    for a in offsets:
        for b in offsets:
            theta = base.copy()
            theta[:-1] += a
            theta[-1] += b
            val = score(theta)
            if val > best_val:
                best_val, best = val, np.clip(theta, lo_b, hi_b)
    step = offsets[1] - offsets[0] if len(offsets) > 1 else 1.0
    current = best.copy()
    for j in range(len(current)):
        def along(v, j=j):
            theta = current.copy()
            theta[j] = v
            return score(theta)

        minimize_scalar(
            lambda v: -along(v),
            bounds=(current[j] - step, current[j] + step),
            method="bounded",
            options={"maxiter": spec.golden_steps},
        )
        val, theta = max(cache.values(), key=lambda item: item[0])
        if val > best_val:
            best_val, best = val, theta
        current = best.copy()
    # Gains at optimizer-tolerance level are not worth a kernel change.
    base_val = score(base)
    if not math.isfinite(best_val) or not best_val > base_val + 1e-8 * (1.0 + abs(base_val)):
        return incumbent
    return incumbent.with_params(best[:-1], best[-1])


class Surrogate:
    """GP surrogate for one unknown function with a cached grid posterior.

    Observations are stored in original units.  When ``standardize`` is on,
    the model works with ``(y - offset) / scale``; the constants are refreshed
    by :meth:`restandardize` (called at hyperparameter refits) and held fixed in
    between, which keeps :meth:`add` an exact rank-one extension.  In original
    units this is a GP with constant prior mean ``offset`` and outputscale
    ``scale**2 * kernel.outputscale``.

    The surrogate mutates in place; use :meth:`copy` or
    :func:`incremental_update` for a functional style.
    """

    def __init__(
        self,
        kernel: Kernel,
        grid: CandidateGrid,
        noise_variance: float,
        standardize: bool = False,
        name: str = "gp",
        capacity: int = 16,
    ):
        if not noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        if kernel.dim != grid.dim:
            raise ValueError("kernel and grid dimensions differ")
        self.kernel = kernel
        self.grid = grid
        self.noise_variance = float(noise_variance)
        self.standardize = standardize
        self.name = name
        self.indices: list[int] = []
        self.values: list[float] = []
        self.offset = 0.0
        self.scale = 1.0
        self._capacity = max(int(capacity), 1)
        self._reset_cache()

    # -- cache management -------------------------------------------------
    # The grid posterior is kept as mean = offset + V^T w and
    # var = prior_var - colsum(V * V).  Each row of V is one rank-one
    # conditioning step; rows need not map one-to-one onto observations.
    def _reset_cache(self):
        n_grid = len(self.grid)
        cap = max(self._capacity, len(self.indices))
        self._capacity = cap
        self._rows = 0
        self._v = np.zeros((cap, n_grid))
        self._w = np.zeros(cap)
        eff = self.effective_kernel
        self._prior_var = eff.outputscale
        self._jitter = 0.0
        self._mean = np.full(n_grid, self.offset)
        self._var = np.full(n_grid, eff.outputscale)

    def _grow(self, need: int):
        if need <= self._capacity:
            return
        cap = max(need, 2 * self._capacity)
        r = self._rows
        v = np.zeros((cap, len(self.grid)))
        v[:r] = self._v[:r]
        w = np.zeros(cap)
        w[:r] = self._w[:r]
        self._v, self._w, self._capacity = v, w, cap

    def _rebuild(self):
        """Recompute the factorization from scratch (after a hyperparameter change).

        Repeats at one grid point are collapsed to their mean with noise
        (sigma^2 + jitter) / n, which gives the same posterior as the full
        n-observation system with the same diagonal jitter.
        """
        self._reset_cache()
        if self.n_obs == 0:
            return
        eff = self.effective_kernel
        uniq, counts, means, _ = _grouped(self.indices, self.values)
        x_u = self.grid.points[uniq]
        k_uu = gram(eff, x_u, x_u)
        # Jitter is added per observation, hence divided by the repeat count.
        base = JITTER_START * (eff.outputscale + self.noise_variance)
        limit = base * (JITTER_MAX / JITTER_START) * (1 + 1e-9)
        jitter = 0.0
        while True:
            try:
                chol = np.linalg.cholesky(k_uu + np.diag((self.noise_variance + jitter) / counts))
                break
            except np.linalg.LinAlgError:
                jitter = base if jitter == 0.0 else 10.0 * jitter
                if jitter > limit:
                    raise NumericalDegeneracyError(
                        f"{self.name}: covariance not positive definite after jitter "
                        f"{JITTER_MAX:g} * mean(diag)"
                    ) from None
        self._jitter = jitter
        m = len(uniq)
        self._grow(m)
        v = solve_triangular(chol, gram(eff, x_u, self.grid.points), lower=True)
        w = solve_triangular(chol, means - self.offset, lower=True)
        self._v[:m] = v
        self._w[:m] = w
        self._rows = m
        self._mean = self.offset + v.T @ w
        self._var = eff.outputscale - np.einsum("ij,ij->j", v, v)

    # -- public API -------------------------------------------------------
    @property
    def n_obs(self) -> int:
        return len(self.indices)

    @property
    def effective_kernel(self) -> Kernel:
        """Kernel in original units."""
        return self.kernel.scaled(self.scale**2) if self.scale != 1.0 else self.kernel

    @property
    def observations(self) -> ObservationSet:
        return ObservationSet(list(self.indices), list(self.values), self.noise_variance)

    def add(self, index: int, value: float) -> None:
        """Append one observation (rank-one extension of the factorization)."""
        index = int(index)
        if not 0 <= index < len(self.grid):
            raise IndexError(f"grid index {index} out of range")
        r = self._rows
        self._grow(r + 1)
        l_row = self._v[:r, index]
        d2 = self._prior_var + self.noise_variance + self._jitter - float(l_row @ l_row)
        self.indices.append(index)
        self.values.append(float(value))
        if not d2 > 1e-14 * (self._prior_var + self.noise_variance):
            self._rebuild()
            return
        d = math.sqrt(d2)
        k_row = gram(self.effective_kernel, self.grid.points[index : index + 1], self.grid.points)[0]
        v_new = (k_row - l_row @ self._v[:r]) / d
        w_new = (float(value) - self._mean[index]) / d
        self._v[r] = v_new
        self._w[r] = w_new
        self._rows = r + 1
        self._mean = self._mean + v_new * w_new
        self._var = self._var - v_new * v_new

    def _standardization(self) -> tuple[float, float]:
        if self.standardize and self.n_obs > 0:
            y = np.asarray(self.values)
            return float(np.mean(y)), max(float(np.std(y)), STD_FLOOR)
        return 0.0, 1.0

    def restandardize(self) -> None:
        """Refresh the standardization constants from the current data."""
        self.offset, self.scale = self._standardization()
        self._rebuild()

    def set_kernel(self, kernel: Kernel) -> None:
        self.kernel = kernel
        self._rebuild()

    def refit(self, spec: FitSpec = FitSpec()) -> Kernel:
        """Restandardize, then refit hyperparameters by marginal likelihood."""
        self.offset, self.scale = self._standardization()
        self.kernel = fit_hyperparameters(self, spec)
        self._rebuild()
        return self.kernel

    def posterior(self, iteration: int | None = None) -> PosteriorTable:
        return PosteriorTable(
            self._mean.copy(),
            np.sqrt(np.clip(self._var, 0.0, None)),
            self.n_obs if iteration is None else iteration,
        )

    def log_marginal_likelihood(self) -> float:
        """Evidence of the standardized data under the current kernel."""
        y = (np.asarray(self.values) - self.offset) / self.scale
        obs = ObservationSet(list(self.indices), list(y), self.noise_variance / self.scale**2)
        return log_marginal_likelihood(self.kernel, obs, self.grid, name=self.name)

    def copy(self) -> "Surrogate":
        other = Surrogate.__new__(Surrogate)
        other.__dict__.update(self.__dict__)
        other.indices = list(self.indices)
        other.values = list(self.values)
        for attr in ("_v", "_w", "_mean", "_var"):
            setattr(other, attr, getattr(self, attr).copy())
        return other


def incremental_update(state: Surrogate, new_obs: tuple[int, float]) -> Surrogate:
    """Functional form of :meth:`Surrogate.add`; ``state`` is left untouched."""
    out = state.copy()
    out.add(*new_obs)
    return out

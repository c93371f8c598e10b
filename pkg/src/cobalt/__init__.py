"""Constrained Bayesian optimization on finite grids with confidence-bound
regions of interest."""

__version__ = "0.1.0"

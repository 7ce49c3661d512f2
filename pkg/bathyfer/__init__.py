"""Bayesian bathymetry reconstruction from sparse free-surface measurements."""

__version__ = "0.3.0"

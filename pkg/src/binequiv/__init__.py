"""Binned Bayesian practical-equivalence testing for weighted scenario datasets."""

__version__ = "0.1.0"

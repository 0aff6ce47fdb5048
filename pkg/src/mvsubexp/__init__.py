"""Numerical verification toolkit for multivariate subexponential tails."""

__version__ = "0.1.0"

"""Numerical toolkit for generalized resolvents of differential expressions
l[y] - lam m[y] with a Nevanlinna-type dependence on the spectral parameter."""

__version__ = "0.1.0"

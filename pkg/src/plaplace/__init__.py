"""Numerical laboratory for the 1-D p-Laplace evolution equation."""

__version__ = "0.1.0"

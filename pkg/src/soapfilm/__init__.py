"""Numerical tools for two-dimensional almost-minimal sets in R^3."""

__version__ = "0.1.0"

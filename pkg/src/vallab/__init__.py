"""Numerical toolkit for continuous valuations on convex bodies."""

__version__ = "0.1.0"

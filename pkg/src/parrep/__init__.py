"""Numerical toolkit for parallel repetition of quantum interactive protocols."""

__version__ = "0.1.0"

"""Numerical toolkit for input-to-state stability of saturated collocated systems."""

__version__ = "0.1.0"

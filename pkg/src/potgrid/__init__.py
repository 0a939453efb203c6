"""Numerical potential theory on planar lattices."""

__version__ = "0.1.0"

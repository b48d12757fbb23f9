"""Finite-resolution thermalization laboratory for exactly diagonalized quantum systems."""

__version__ = "0.1.0"

"""Numerical laboratory for the vanishing-viscosity limit on a periodic half-strip."""

__version__ = "0.1.0"

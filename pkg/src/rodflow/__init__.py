"""Numerical laboratory for Brownian axisymmetric particle suspensions in Stokes flow."""

__version__ = "0.1.0"

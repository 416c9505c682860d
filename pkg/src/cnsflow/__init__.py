"""Numerical laboratory for the 2-D Navier-Stokes equation constrained to
conserve energy and moment of inertia."""

__version__ = "0.1.0"

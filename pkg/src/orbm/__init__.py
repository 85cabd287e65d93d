"""Obliquely reflected Brownian motion in the quadrant: Skorokhod solver, simulation and checks."""

__version__ = "0.1.0"

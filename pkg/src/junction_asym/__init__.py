"""Matched-asymptotic toolkit for the Poisson problem on a thin plate joined to thin rods."""

__version__ = "0.1.0"

"""Numerical laboratory for perturbed Fefferman metrics over contact CR three-manifolds."""

__version__ = "0.1.0"

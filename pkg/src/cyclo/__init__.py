"""Exact cyclic homology operator calculus and Gauss-Manin transport."""

__version__ = "0.1.0"

"""Distributed alternating gradient descent for convex semi-infinite programs."""

__version__ = "0.1.0"

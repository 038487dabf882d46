"""Exact variational calculus with Grassmann-graded jet coordinates."""

__version__ = "0.1.0"

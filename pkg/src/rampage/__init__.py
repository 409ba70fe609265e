"""Randomized-midpoint extragradient solvers and verification lab."""

__version__ = "0.1.0"

from . import fields, harness, integration, rates, sampling, solvers  # noqa: F401

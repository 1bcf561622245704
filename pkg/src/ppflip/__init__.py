"""Biased plane partitions: exact equilibrium, single-flip dynamics and coupling experiments."""

__version__ = "0.1.0"

"""Simulation and statistics for proof-of-work block arrival timing."""

__version__ = "0.1.0"

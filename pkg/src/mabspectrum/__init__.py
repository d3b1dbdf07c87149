"""Stochastic multi-armed bandit library and spectrum-access simulator."""

__version__ = "0.1.0"

"""Tabular SOR Q-learning with exact Bellman-operator oracles."""

__version__ = "0.1.0"

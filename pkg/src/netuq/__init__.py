"""Uncertainty propagation through networks of coupled components."""

__version__ = "0.1.0"

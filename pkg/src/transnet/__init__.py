"""Simulator and analyzer for networks of relational transducers."""

__version__ = "0.1.0"

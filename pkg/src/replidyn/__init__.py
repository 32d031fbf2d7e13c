"""Discrete-time replicator dynamics with similar-order preserving fitness."""

__version__ = "0.1.0"

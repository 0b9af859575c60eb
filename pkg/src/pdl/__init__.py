"""Sparse SDE learning from population (cross-sectional) data."""

__version__ = "0.1.0"

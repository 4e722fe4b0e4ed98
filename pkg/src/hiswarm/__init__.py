"""Hierarchical trajectory replanning for large aerial swarms."""

__version__ = "0.1.0"

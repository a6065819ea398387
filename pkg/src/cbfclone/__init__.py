"""Imitation learning with safety guarantees transferred from robust CBF experts."""

__version__ = "0.1.0"

"""Effective spin models of interacting circular Rydberg atoms."""

__version__ = "0.1.0"

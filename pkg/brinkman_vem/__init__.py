"""Divergence-conforming virtual elements for the Brinkman equations with Nitsche boundary conditions."""

__version__ = "1.0.0"

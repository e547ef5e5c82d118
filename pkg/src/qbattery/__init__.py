"""Simulation and parameter search for harmonically driven quantum-battery charging."""

__version__ = "0.1.0"

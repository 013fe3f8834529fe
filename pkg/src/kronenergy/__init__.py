"""Polynomial H-infinity energy functions for polynomial-drift systems."""

__version__ = "0.1.0"

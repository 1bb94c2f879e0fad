"""Multipath parameter estimation for direction-scan channel sounding."""

__version__ = "0.1.0"

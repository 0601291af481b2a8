"""Coupled platelet-surface and bulk chemical transport solver."""
__version__ = "0.1.0"

"""Spectral analysis and modulation theory for two-dimensional periodic patterns."""

__version__ = "0.1.0"

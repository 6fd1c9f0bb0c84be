"""Desk-scale numerics for loop Hodge structures and harmonic bundles."""

__version__ = "0.1.0"

"""Isospectral singular perturbations of correct restrictions, checked numerically."""

__version__ = "0.1.0"

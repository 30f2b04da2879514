"""Constraint energy minimizing multiscale finite elements for the Poisson
equation on perforated domains."""

__version__ = "0.1.0"

"""Numerical laboratory for geodesic stability operators on the
periodic channel."""

__version__ = "0.1.0"

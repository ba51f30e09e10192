"""Forecast future RGB-D frames from two observed frames using a 3D point-cloud scene model."""

__version__ = "0.1.0"

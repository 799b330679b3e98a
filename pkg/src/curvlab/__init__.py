"""Numerical laboratory for curvature tensors of metrics with potentials."""

__version__ = "0.1.0"

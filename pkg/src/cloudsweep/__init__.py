"""Ergodic surface coverage on point clouds with spectral diffusion."""

__version__ = "0.1.0"

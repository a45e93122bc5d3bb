"""Density-ratio estimation with noise-amplified contrastive objectives."""

__version__ = "0.1.0"

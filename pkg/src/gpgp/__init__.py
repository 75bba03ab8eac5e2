"""Generative probabilistic graphics programs with single-site MCMC."""

__version__ = "0.1.0"

"""Continual concept learning with generative replay and sliced-Wasserstein matching."""

__version__ = "0.1.0"

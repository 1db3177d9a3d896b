"""Kernel mean embeddings of Gaussian measures and MMD permutation tests for functional data."""

__version__ = "0.1.0"

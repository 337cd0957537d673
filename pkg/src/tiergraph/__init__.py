"""Hierarchical molecular graph embeddings built from functional groups, rings and a catch-all group."""

__version__ = "0.1.0"

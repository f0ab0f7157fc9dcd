"""Hypernetwork dismantling with a learned betweenness approximator."""

__version__ = "0.1.0"

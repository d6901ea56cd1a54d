"""Effective-capacitance toolkit: RC network modeling, pi reduction,
iterative Ceff heuristics, a transient-simulation oracle, synthetic net
generation, and batched graph-attention inference."""

__version__ = "0.1.0"

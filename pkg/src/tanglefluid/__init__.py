"""Tangle tip-count process, its delay-differential fluid limit, and convergence experiments."""

__version__ = "0.1.0"

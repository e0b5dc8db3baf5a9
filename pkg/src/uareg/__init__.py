"""Underwater acoustic target recognition with smoothness-inducing regularization and LMR."""

__version__ = "0.1.0"

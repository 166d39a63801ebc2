"""Bayesian profile regression with generalised linear mixed model outcomes."""

__version__ = "0.1.0"

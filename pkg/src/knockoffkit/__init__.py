"""Model-X knockoffs for Gaussian-mixture and Bayesian-network feature models."""
__version__ = "0.1.0"

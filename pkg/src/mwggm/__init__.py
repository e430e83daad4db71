"""Bayesian multi-way Gaussian graphical models with G-Wishart priors."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

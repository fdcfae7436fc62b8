"""Tails of multivariate distributions: regular-variation probes, homogeneous
limit densities, censoring and clique-factorized graphical tail models."""

from .errors import (AssemblyError, DomainError, FitError, InsufficientDataError, IntegrationError,
                     NotDecomposable)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "DomainError",
    "FitError",
    "InsufficientDataError",
    "IntegrationError",
    "NotDecomposable",
    "__version__",
]

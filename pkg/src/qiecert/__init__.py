"""Numerical toolkit for quadratic integral equations on the half-line.

Solve ``x(t) = g(t, x) + lam * I1[x](t) * I2[x](t)`` by Picard iteration,
estimate a measure of non-compactness on function ensembles and check the
sufficient conditions for existence of a solution on samples.
"""

from .certify import CertifyConfig, CertificationReport, certify_existence, estimate_gamma
from .estimators import HullSampler, QuadraticVolterraSolver, SigmaEstimator
from .expr import ExpressionDomainError, ParseError, evaluate, parse, to_source
from .funcspace import Grid, GridFunction, ModulusParams, cumulative_kernel_integral, make_grid
from .mnc import Ensemble, random_ensemble, set_iterate, sigma_estimate
from .operator import ProblemSpec, apply_T, picard_solve

__version__ = "0.1.0"

__all__ = [
    "CertifyConfig",
    "CertificationReport",
    "certify_existence",
    "estimate_gamma",
    "HullSampler",
    "QuadraticVolterraSolver",
    "SigmaEstimator",
    "ExpressionDomainError",
    "ParseError",
    "evaluate",
    "parse",
    "to_source",
    "Grid",
    "GridFunction",
    "ModulusParams",
    "cumulative_kernel_integral",
    "make_grid",
    "Ensemble",
    "random_ensemble",
    "set_iterate",
    "sigma_estimate",
    "ProblemSpec",
    "apply_T",
    "picard_solve",
]

"""Bayesian trend and multi-seasonality decomposition with shrinkage priors.

The package bundles the banded penalty operators, an identifiability
checker for penalized decompositions, an exact penalized least-squares
solver, a Gibbs sampler with horseshoe shrinkage, horseshoe+ outliers and
stochastic volatility, and a simulation harness.
"""

from .exceptions import (
    BastionError,
    ConfigError,
    DataError,
    NonIdentifiableError,
    NotPositiveDefiniteError,
    NumericError,
)

__version__ = "0.1.0"

from .gibbs import ModelSpec, PosteriorDraws, run_decomposition, summarize  # noqa: E402
from .identifiability import ComponentPenalties, check_identifiability  # noqa: E402
from .map_solver import solve_map  # noqa: E402

__all__ = [
    "BastionError",
    "ConfigError",
    "DataError",
    "NonIdentifiableError",
    "NotPositiveDefiniteError",
    "NumericError",
    "ModelSpec",
    "PosteriorDraws",
    "run_decomposition",
    "summarize",
    "ComponentPenalties",
    "check_identifiability",
    "solve_map",
    "__version__",
]

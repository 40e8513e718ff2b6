"""Sparse regression with pairwise interactions under strong hierarchy."""

import os

# TBB shipped with some images is too old for numba and only produces a warning.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from hierprox.problem import (  # noqa: E402
    Coefficients,
    DesignData,
    PenaltyConfig,
    estimate_step,
    full_gradient,
    interaction_column,
    objective,
    partial_gradient,
)
from hierprox.prox import ProxInput, build_graph, prox  # noqa: E402
from hierprox.solver import ActiveSet, GradientSnapshot, fit_single  # noqa: E402
from hierprox.path import FitPath, PathConfig, fit_path, lambda_max  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ActiveSet",
    "Coefficients",
    "DesignData",
    "FitPath",
    "GradientSnapshot",
    "PathConfig",
    "PenaltyConfig",
    "ProxInput",
    "build_graph",
    "estimate_step",
    "fit_path",
    "fit_single",
    "full_gradient",
    "interaction_column",
    "lambda_max",
    "objective",
    "partial_gradient",
    "prox",
]

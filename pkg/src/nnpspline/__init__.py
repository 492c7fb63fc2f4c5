"""Nonnegative cubic P-spline regression through second-order cone programming."""

from .bspline import KnotVector, SplineModel, design_matrix, eval_spline, make_uniform_knots
from .estimator import NonnegativePSpline, NonnegativePSplineCV
from .exceptions import (
    DataError,
    DegenerateDofError,
    DegenerateIntervalError,
    DomainError,
    RankDeficiencyError,
    SelectionError,
    SolverError,
)
from .formulate import FitProblem, fit_nonneg, unconstrained_fit
from .io import ModelFile, load_csv, save_csv
from .modelselect import SelectionGrid, select_model
from .nonneg import min_on_grid

__version__ = "0.1.0"

__all__ = [
    "KnotVector",
    "SplineModel",
    "design_matrix",
    "eval_spline",
    "make_uniform_knots",
    "NonnegativePSpline",
    "NonnegativePSplineCV",
    "DataError",
    "DegenerateDofError",
    "DegenerateIntervalError",
    "DomainError",
    "RankDeficiencyError",
    "SelectionError",
    "SolverError",
    "FitProblem",
    "fit_nonneg",
    "unconstrained_fit",
    "ModelFile",
    "load_csv",
    "save_csv",
    "SelectionGrid",
    "select_model",
    "min_on_grid",
]

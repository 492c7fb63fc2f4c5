"""Scikit-learn style estimators for nonnegative P-spline regression."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_1d_samples, check_count, check_model_name, check_positive, check_range
from .bspline import eval_spline, make_uniform_knots
from .formulate import FitProblem, fit_nonneg
from .modelselect import DEFAULT_KNOT_COUNTS, DEFAULT_LAMBDAS, SelectionGrid, select_model

__all__ = ["NonnegativePSpline", "NonnegativePSplineCV"]


class _SplinePredictMixin:
    def predict(self, X):
        """Evaluate the fitted spline at ``X``.

        Raises
        ------
        DomainError
            If a point lies outside the knot range.
        """
        check_is_fitted(self, "model_")
        return eval_spline(self.model_, check_1d_samples(X))

    def _more_tags(self):
        return {"poor_score": True}


class NonnegativePSpline(_SplinePredictMixin, RegressorMixin, BaseEstimator):
    """Cubic P-spline constrained to be nonnegative on its whole knot range.

    Parameters
    ----------
    n_interior : int, default=6
        Number of equally spaced interior knots.
    lam : float, default=1e-2
        Weight of the second-difference penalty.
    x_range : (float, float), optional
        Knot range; defaults to the range of the training samples.
    model : {"II", "I"}, default="II"
        Cone formulation handed to the solver.
    tol : float, default=1e-9
        Solver tolerance.
    polish : bool, default=True
        Refine the solver's coefficients on its contact set.

    Attributes
    ----------
    model_ : SplineModel
    knots_ : KnotVector
    coef_ : ndarray of shape (n_interior + 4,)
    polished_ : bool
    n_features_in_ : int
    """

    def __init__(self, n_interior=6, lam=1e-2, x_range=None, model="II", tol=1e-9, polish=True):
        self.n_interior = n_interior
        self.lam = lam
        self.x_range = x_range
        self.model = model
        self.tol = tol
        self.polish = polish

    def fit(self, X, y):
        x, y = check_1d_samples(X, y)
        n_int = check_count("n_interior", self.n_interior)
        lam = check_positive("lam", self.lam, allow_zero=True)
        tol = check_positive("tol", self.tol)
        check_model_name(self.model)
        lo, hi = check_range(self.x_range, x)
        knots = make_uniform_knots(lo, hi, n_int)
        fit = fit_nonneg(FitProblem(x, y, knots, lam), model=self.model, tol=tol, polish=self.polish)
        self.model_ = fit.model
        self.knots_ = knots
        self.coef_ = np.array(fit.model.alpha)
        self.polished_ = fit.polished
        self.n_features_in_ = 1
        return self


class NonnegativePSplineCV(_SplinePredictMixin, RegressorMixin, BaseEstimator):
    """Nonnegative P-spline with the weight chosen by GCV and the knot count by AIC.

    For each knot count the weight minimising GCV is kept; the knot count
    whose kept fit has the smallest AIC wins.

    Parameters
    ----------
    lambdas : sequence of float, optional
        Candidate weights; defaults to ``1e-4 .. 1e4`` by decades.
    knot_counts : sequence of int, optional
        Candidate interior knot counts; defaults to 4 to 19.
    x_range : (float, float), optional
    model : {"II", "I"}, default="II"
    tol : float, default=1e-9
    n_jobs : int, optional
        Parallel grid evaluation through joblib.

    Attributes
    ----------
    best_report_ : FitReport
    reports_ : list of FitReport
    n_interior_ : int
    lam_ : float
    model_ : SplineModel
    coef_ : ndarray
    """

    def __init__(self, lambdas=None, knot_counts=None, x_range=None, model="II", tol=1e-9, n_jobs=None):
        self.lambdas = lambdas
        self.knot_counts = knot_counts
        self.x_range = x_range
        self.model = model
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X, y):
        x, y = check_1d_samples(X, y)
        tol = check_positive("tol", self.tol)
        check_model_name(self.model)
        lo, hi = check_range(self.x_range, x)
        grid = SelectionGrid(
            DEFAULT_LAMBDAS if self.lambdas is None else tuple(self.lambdas),
            DEFAULT_KNOT_COUNTS if self.knot_counts is None else tuple(self.knot_counts),
        )
        best, reports = select_model(x, y, grid, (lo, hi), self.model, tol, self.n_jobs)
        self.best_report_ = best
        self.reports_ = reports
        self.n_interior_ = best.n_interior
        self.lam_ = best.lam
        self.model_ = best.model
        self.coef_ = np.array(best.model.alpha)
        self.n_features_in_ = 1
        return self

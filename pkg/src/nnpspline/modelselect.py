"""Smoothing-parameter and knot-count selection.

The smoothing weight is chosen per knot count by generalized cross
validation and the knot count by AIC::

    ASR  = sum(r^2) / m
    GCV  = ASR / (1 - tr S / m)^2,       S = X (X'X + lam D D')^-1 X'
    AIC  = m (ln(sum(r^2) / m) + 1) + 2 n

``r`` are the residuals of the constrained fit; ``S`` is the smoother of
the unconstrained fit and ``n`` the number of basis functions.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.linalg import solve_triangular

from .bspline import KnotVector, SplineModel, design_matrix, eval_spline, make_uniform_knots
from .exceptions import DegenerateDofError, RankDeficiencyError, SelectionError, SolverError
from .formulate import FitProblem, fit_nonneg, normal_matrix, spd_factor, spd_solve

__all__ = [
    "DEFAULT_LAMBDAS",
    "DEFAULT_KNOT_COUNTS",
    "ZeroResidualWarning",
    "SelectionGrid",
    "FitReport",
    "asr",
    "smoother_matrix",
    "smoother_trace",
    "gcv",
    "gcv_from_parts",
    "aic",
    "evaluate_cell",
    "select_model",
    "best_by_scan",
    "write_report",
    "REPORT_COLUMNS",
]

DEFAULT_LAMBDAS = tuple(10.0**p for p in range(-4, 5))
DEFAULT_KNOT_COUNTS = tuple(range(4, 20))
REPORT_COLUMNS = ("n_interior", "lambda", "asr", "trace_s", "gcv", "aic", "status")


class ZeroResidualWarning(RuntimeWarning):
    """AIC hit ``ln 0``; the value returned is ``-inf``."""


def _residuals(x, y, model: SplineModel) -> np.ndarray:
    return np.asarray(y, dtype=float) - eval_spline(model, np.asarray(x, dtype=float))


def asr(x, y, model: SplineModel) -> float:
    """Average squared residual of ``model`` on the data."""
    r = _residuals(x, y, model)
    if r.size == 0:
        raise ValueError("asr needs at least one sample")
    return float(r @ r) / r.size


def smoother_matrix(X, lam, D=None) -> np.ndarray:
    """Full ``m x m`` smoother ``X (X'X + lam D D')^-1 X'``.

    ``D`` defaults to the second-difference matrix; passing it explicitly
    only matters for nonstandard penalties.
    """
    X = np.asarray(X, dtype=float)
    M = normal_matrix(X, lam) if D is None else X.T @ X + lam * (D @ D.T)
    return X @ spd_solve(M, X.T)


def smoother_trace(X, lam, D=None) -> float:
    """``tr S`` as the squared Frobenius norm of ``L^-1 X'`` with ``L L' = X'X + lam D D'``."""
    X = np.asarray(X, dtype=float)
    M = normal_matrix(X, lam) if D is None else X.T @ X + lam * (D @ D.T)
    L = spd_factor(M)
    Z = solve_triangular(L, X.T, lower=True)
    return float(np.sum(Z * Z))


def gcv_from_parts(asr_value, trace_s, m) -> float:
    """``asr / (1 - trace_s / m)^2``; raises when ``trace_s >= m``."""
    if not trace_s < m:
        raise DegenerateDofError(f"effective degrees of freedom {trace_s:.6g} reach the sample size {m}")
    return float(asr_value) / (1.0 - float(trace_s) / m) ** 2


def gcv(x, y, knots: KnotVector, lam, model: SplineModel = None) -> float:
    """GCV of the constrained fit at ``(knots, lam)``.

    ``model`` is refitted with :func:`fit_nonneg` when not supplied.
    """
    problem = FitProblem(x, y, knots, lam)
    if model is None:
        model = fit_nonneg(problem).model
    trace_s = smoother_trace(problem.design(), lam)
    return gcv_from_parts(asr(x, y, model), trace_s, problem.m)


def aic(x, y, model: SplineModel, n=None) -> float:
    """``m (ln(RSS / m) + 1) + 2 n`` with ``n`` the basis size by default.

    A zero residual sum returns ``-inf`` and emits :class:`ZeroResidualWarning`.
    """
    r = _residuals(x, y, model)
    m = r.size
    if m == 0:
        raise ValueError("aic needs at least one sample")
    n = model.knots.n_basis if n is None else int(n)
    rss = float(r @ r)
    if rss <= 0.0:
        warnings.warn("zero residual sum of squares; AIC is -inf", ZeroResidualWarning, stacklevel=2)
        return -math.inf
    return m * (math.log(rss / m) + 1.0) + 2.0 * n


@dataclass(frozen=True)
class SelectionGrid:
    """Smoothing weights and interior-knot counts to scan.

    Values are stored sorted, so the order they are given in is irrelevant.
    """

    lambda_values: tuple = DEFAULT_LAMBDAS
    interior_knot_counts: tuple = DEFAULT_KNOT_COUNTS

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambda_values)
        counts = tuple(self.interior_knot_counts)
        if not lams or not counts:
            raise ValueError("grid axes must be nonempty")
        if any(not (v > 0 and math.isfinite(v)) for v in lams):
            raise ValueError("smoothing weights must be positive and finite")
        if any(int(k) != k or k < 0 for k in counts):
            raise ValueError("interior knot counts must be nonnegative integers")
        counts = tuple(int(k) for k in counts)
        if len(set(lams)) != len(lams) or len(set(counts)) != len(counts):
            raise ValueError("grid axes must not contain duplicates")
        object.__setattr__(self, "lambda_values", tuple(sorted(lams)))
        object.__setattr__(self, "interior_knot_counts", tuple(sorted(counts)))

    @property
    def size(self) -> int:
        return len(self.lambda_values) * len(self.interior_knot_counts)

    def cells(self):
        """``(n_interior, lam)`` pairs, knot count outermost."""
        return [(k, lam) for k in self.interior_knot_counts for lam in self.lambda_values]


@dataclass(frozen=True, eq=False)
class FitReport:
    """Statistics of one grid cell.

    ``status`` is ``"optimal"`` for usable cells; anything else marks the
    cell as failed, and its statistics are NaN. ``flags`` collects
    nonfatal notes such as ``"aic_zero_residual"``.
    """

    n_interior: int
    lam: float
    asr: float
    trace_s: float
    gcv: float
    aic: float
    status: str
    model: SplineModel = field(default=None, repr=False)
    flags: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def evaluate_cell(x, y, n_interior, lam, x_range, model="II", tol=1e-9) -> FitReport:
    """Fit one ``(n_interior, lam)`` cell and compute its statistics."""
    knots = make_uniform_knots(x_range[0], x_range[1], n_interior)
    nan = math.nan
    try:
        problem = FitProblem(x, y, knots, lam)
        fit = fit_nonneg(problem, model=model, tol=tol)
    except SolverError as exc:
        return FitReport(n_interior, lam, nan, nan, nan, nan, exc.status or "numerical_failure")
    except RankDeficiencyError:
        return FitReport(n_interior, lam, nan, nan, nan, nan, "rank_deficient")
    flags = []
    a = asr(x, y, fit.model)
    try:
        tr = smoother_trace(design_matrix(knots, problem.x), lam)
        g = gcv_from_parts(a, tr, problem.m)
    except RankDeficiencyError:
        return FitReport(n_interior, lam, a, nan, nan, nan, "rank_deficient", fit.model)
    except DegenerateDofError:
        return FitReport(n_interior, lam, a, tr, nan, nan, "degenerate_dof", fit.model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroResidualWarning)
        value = aic(x, y, fit.model)
    if any(issubclass(w.category, ZeroResidualWarning) for w in caught):
        flags.append("aic_zero_residual")
    if not fit.polished:
        flags.append("unpolished")
    return FitReport(n_interior, lam, a, tr, g, value, "optimal", fit.model, tuple(flags))


def best_by_scan(reports):
    """Two-level winner of a report table.

    Per knot count the smallest GCV wins (ties go to the smaller weight);
    across knot counts the smallest AIC wins (ties go to fewer knots).
    Failed cells are ignored. Returns ``None`` if no cell succeeded.
    """
    per_count = {}
    for rep in sorted((r for r in reports if r.ok), key=lambda r: (r.n_interior, r.lam)):
        cur = per_count.get(rep.n_interior)
        if cur is None or rep.gcv < cur.gcv:
            per_count[rep.n_interior] = rep
    best = None
    for k in sorted(per_count):
        rep = per_count[k]
        if best is None or rep.aic < best.aic:
            best = rep
    return best


def select_model(x, y, grid: SelectionGrid = None, x_range=None, model="II", tol=1e-9, n_jobs=None):
    """Scan ``grid`` and pick the winning cell.

    Parameters
    ----------
    x, y : array_like
    grid : SelectionGrid, optional
        Defaults to weights ``1e-4 .. 1e4`` by decades and 4 to 19 interior knots.
    x_range : (float, float), optional
        Knot range; defaults to the data range.
    n_jobs : int, optional
        Cells are fitted in parallel through joblib when given; the report
        order does not depend on it.

    Returns
    -------
    best : FitReport
    reports : list of FitReport
        One per cell, knot count outermost, weights ascending.
    """
    grid = SelectionGrid() if grid is None else grid
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("selection needs at least one sample")
    if x_range is None:
        x_range = (float(x.min()), float(x.max()))
    cells = grid.cells()
    if n_jobs is not None and n_jobs != 1:
        from joblib import Parallel, delayed

        reports = Parallel(n_jobs=n_jobs)(
            delayed(evaluate_cell)(x, y, k, lam, x_range, model, tol) for k, lam in cells
        )
    else:
        reports = [evaluate_cell(x, y, k, lam, x_range, model, tol) for k, lam in cells]
    best = best_by_scan(reports)
    if best is None:
        raise SelectionError(f"all {len(reports)} grid cells failed", reports)
    return best, list(reports)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def write_report(reports, fh) -> None:
    """Write the report table as CSV with :data:`REPORT_COLUMNS`."""
    fh.write(",".join(REPORT_COLUMNS) + "\n")
    for r in reports:
        row = (r.n_interior, r.lam, r.asr, r.trace_s, r.gcv, r.aic, r.status)
        fh.write(",".join(_fmt(v) for v in row) + "\n")

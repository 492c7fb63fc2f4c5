"""Exception types raised across the package."""

import numpy as np


class DomainError(ValueError):
    """An abscissa or parameter lies outside the admissible domain."""


class DegenerateIntervalError(ValueError):
    """A knot interval has zero length where a nonempty one is required."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A normal matrix is singular to working precision.

    Attributes
    ----------
    pivot : float
        The smallest pivot met during the factorization.
    """

    def __init__(self, message, pivot=float("nan")):
        super().__init__(message)
        self.pivot = pivot


class DegenerateDofError(ValueError):
    """The smoother trace is not smaller than the number of samples."""


class SolverError(RuntimeError):
    """A cone program was not solved to optimality.

    Attributes
    ----------
    status : str
        The solver status that caused the refusal.
    """

    def __init__(self, message, status):
        super().__init__(message)
        self.status = status


class SelectionError(RuntimeError):
    """Every cell of a selection grid failed.

    Attributes
    ----------
    reports : list of FitReport
        The failed cells.
    """

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)


class DataError(ValueError):
    """Input data are malformed or empty."""

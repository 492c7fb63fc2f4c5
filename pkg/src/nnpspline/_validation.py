"""Input checks shared by the estimators and the command line."""

import math
from numbers import Integral, Real

import numpy as np

from .exceptions import DataError, DomainError


def check_1d_samples(X, y=None):
    """Return ``x`` (and ``y``) as 1-D float arrays.

    ``X`` may be 1-D or a single-column 2-D array, as scikit-learn passes
    feature matrices. Non-finite values and length mismatches raise
    :class:`DataError`.
    """
    x = np.asarray(X, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise DataError(f"expected a single feature, got {x.shape[1]} columns")
        x = x[:, 0]
    elif x.ndim != 1:
        raise DataError(f"expected 1-D samples, got an array of shape {x.shape}")
    if x.size == 0:
        raise DataError("no samples")
    if not np.all(np.isfinite(x)):
        raise DataError("x contains non-finite values")
    if y is None:
        return x
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != x.shape:
        raise DataError(f"x and y lengths differ ({x.size} != {y.size})")
    if not np.all(np.isfinite(y)):
        raise DataError("y contains non-finite values")
    return x, y


def check_range(x_range, x=None):
    """Validate ``(lo, hi)``; defaults to the span of ``x`` when ``None``.

    Samples outside the range raise :class:`DomainError`.
    """
    if x_range is None:
        if x is None:
            raise ValueError("either x_range or samples are required")
        lo, hi = float(np.min(x)), float(np.max(x))
    else:
        lo, hi = (float(v) for v in x_range)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise DomainError(f"need a finite range lo < hi, got [{lo}, {hi}]")
    if x is not None:
        out = (x < lo) | (x > hi)
        if np.any(out):
            p = int(np.flatnonzero(out)[0])
            raise DomainError(f"x[{p}] = {float(x[p])!r} lies outside [{lo}, {hi}]")
    return lo, hi


def check_positive(name, value, allow_zero=False) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    v = float(value)
    ok = v >= 0 if allow_zero else v > 0
    if not (ok and math.isfinite(v)):
        bound = "nonnegative" if allow_zero else "positive"
        raise ValueError(f"{name} must be {bound} and finite, got {value!r}")
    return v


def check_count(name, value) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


def check_model_name(model) -> str:
    if model not in ("I", "II"):
        raise ValueError(f"model must be 'I' or 'II', got {model!r}")
    return model

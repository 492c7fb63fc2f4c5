"""Knot vectors, B-spline basis evaluation and per-interval monomial tables.

Indices are zero-based throughout: basis function ``i`` of order ``k`` is
supported on ``[t[i], t[i + k]]`` and interval ``i`` is ``[t[i], t[i + 1])``.
The last nonempty interval is closed on the right so that the right end of
the knot range belongs to the spline's domain.
"""

from dataclasses import dataclass, field
from numbers import Real

import numpy as np

from .exceptions import DegenerateIntervalError, DomainError

__all__ = [
    "KnotVector",
    "SplineModel",
    "IntervalPolyCoeffs",
    "make_uniform_knots",
    "eval_basis",
    "eval_all_basis",
    "design_matrix",
    "greville",
    "piecewise_coeffs",
    "uniform_piecewise_coeffs",
    "eval_spline",
]


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Nondecreasing knot sequence for splines of a fixed order.

    Parameters
    ----------
    knots : array_like
        Knot abscissae, nondecreasing.
    order : int, default=4
        Spline order (degree + 1).
    """

    knots: np.ndarray
    order: int = 4

    def __post_init__(self):
        t = np.array(self.knots, dtype=float)
        if t.ndim != 1:
            raise ValueError("knots must be one-dimensional")
        if self.order < 1:
            raise ValueError(f"order must be positive, got {self.order}")
        if t.size < self.order + 1:
            raise ValueError(
                f"need at least {self.order + 1} knots for order {self.order}, got {t.size}"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be nondecreasing")
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.order

    @property
    def base_interval(self) -> tuple:
        """Span ``[t[k-1], t[n]]`` on which the basis is a partition of unity."""
        return float(self.knots[self.order - 1]), float(self.knots[self.n_basis])

    @property
    def interior_knots(self) -> np.ndarray:
        lo, hi = self.base_interval
        t = self.knots[self.order : self.n_basis]
        return t[(t > lo) & (t < hi)]

    def intervals(self, nonempty=True) -> list:
        """Indices ``i`` of the intervals ``[t[i], t[i+1]]`` inside the base interval."""
        idx = range(self.order - 1, self.n_basis)
        if nonempty:
            return [i for i in idx if self.knots[i] < self.knots[i + 1]]
        return list(idx)

    def has_full_multiplicity(self) -> bool:
        k = self.order
        t = self.knots
        return bool(np.all(t[:k] == t[0]) and np.all(t[-k:] == t[-1]))

    def has_distinct_interior(self) -> bool:
        """True when no knot inside the base interval is repeated."""
        lo, hi = self.base_interval
        t = self.knots[self.order - 1 : self.n_basis + 1]
        return bool(np.all(np.diff(t) > 0)) and lo < hi

    def spacing(self) -> float:
        """Common interval length of an equally spaced base interval.

        Raises
        ------
        ValueError
            If the intervals of the base interval are not equally spaced.
        """
        steps = np.diff(self.knots[self.order - 1 : self.n_basis + 1])
        delta = float(steps.mean())
        if not np.allclose(steps, delta, rtol=1e-12, atol=0.0) or delta <= 0:
            raise ValueError("knot vector is not equally spaced")
        return delta


@dataclass(frozen=True, eq=False)
class SplineModel:
    """B-spline coefficients over a knot vector.

    ``certificates`` optionally holds the per-interval nonnegativity
    certificates the coefficients were fitted with.
    """

    knots: KnotVector
    alpha: np.ndarray
    certificates: tuple = field(default=())

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.shape != (self.knots.n_basis,):
            raise ValueError(
                f"alpha has shape {alpha.shape}, expected ({self.knots.n_basis},)"
            )
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "certificates", tuple(self.certificates))

    def __call__(self, x):
        return eval_spline(self, x)


@dataclass(frozen=True, eq=False)
class IntervalPolyCoeffs:
    """Monomial coefficients of the four basis functions alive on one interval.

    ``a[u, v]`` is the coefficient of ``x**u`` attached to ``alpha[i - 3 + v]``.
    """

    interval_index: int
    a: np.ndarray

    def beta(self, alpha_local) -> np.ndarray:
        """Cubic coefficients ``(b3, b2, b1, b0)`` for local coefficients ``alpha[i-3:i+1]``."""
        return (self.a @ np.asarray(alpha_local, dtype=float))[::-1]

    def __call__(self, alpha_local, x):
        return np.polyval(self.beta(alpha_local), x)


def make_uniform_knots(x_min, x_max, n_interior, order=4) -> KnotVector:
    """Knots with ``order``-fold ends and ``n_interior`` equally spaced interior knots.

    The spacing is ``(x_max - x_min) / (n_interior + 1)``.
    """
    x_min = float(x_min)
    x_max = float(x_max)
    if not (np.isfinite(x_min) and np.isfinite(x_max)) or x_min >= x_max:
        raise DomainError(f"need x_min < x_max, got [{x_min}, {x_max}]")
    if n_interior < 0:
        raise ValueError(f"n_interior must be >= 0, got {n_interior}")
    inner = np.linspace(x_min, x_max, n_interior + 2)
    t = np.concatenate([np.full(order - 1, x_min), inner, np.full(order - 1, x_max)])
    return KnotVector(t, order)


def _last_nonempty(t) -> int:
    for j in range(len(t) - 2, -1, -1):
        if t[j] < t[j + 1]:
            return j
    raise DegenerateIntervalError("all knots coincide")


def eval_basis(knots, k, i, x):
    """Value of the ``i``-th order-``k`` B-spline at ``x`` by direct recursion.

    Works in whatever arithmetic the inputs carry, so passing
    :class:`fractions.Fraction` knots and abscissa gives exact values.
    Intended for checking and small-scale use; see :func:`eval_all_basis`
    for the batched evaluation.
    """
    t = knots.knots if isinstance(knots, KnotVector) else list(knots)
    n = len(t) - k
    if k < 1 or n < 1:
        raise ValueError(f"order {k} incompatible with {len(t)} knots")
    if not 0 <= i < n:
        raise IndexError(f"basis index {i} out of range [0, {n})")
    if isinstance(x, Real) and not np.isfinite(float(x)):
        raise DomainError(f"x must be finite, got {x}")
    last = _last_nonempty(t)

    def chi(j):
        if t[j] <= x < t[j + 1] or (x == t[-1] and j == last):
            return 1
        return 0

    def omega(j, kk):
        den = t[j + kk - 1] - t[j]
        if den == 0:
            return 0
        return (x - t[j]) / den

    def rec(j, kk):
        if kk == 1:
            return chi(j)
        return omega(j, kk) * rec(j, kk - 1) + (1 - omega(j + 1, kk)) * rec(j + 1, kk - 1)

    return rec(i, k)


def _nonzero_basis(knots: KnotVector, x: np.ndarray):
    """Triangular de Boor scheme: the ``k`` nonzero values per abscissa.

    Returns ``(first, values)`` where ``values[p, r]`` is the value of basis
    ``first[p] + r``. Entries whose index falls outside ``[0, n_basis)`` are
    zeroed (they belong to basis functions of the padded knot vector).
    """
    k = knots.order
    t = knots.knots
    pad = k - 1
    tp = np.concatenate([np.full(pad, t[0]), t, np.full(pad, t[-1])])
    span = np.searchsorted(tp, x, side="right") - 1
    at_end = x == t[-1]
    span[at_end] = _last_nonempty(t) + pad

    m = x.size
    vals = np.zeros((m, k))
    vals[:, 0] = 1.0
    left = np.zeros((m, k))
    right = np.zeros((m, k))
    for j in range(1, k):
        left[:, j] = x - tp[span + 1 - j]
        right[:, j] = tp[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    first = span - pad - (k - 1)
    idx = first[:, None] + np.arange(k)
    vals[(idx < 0) | (idx >= knots.n_basis)] = 0.0
    return first, vals


def _check_domain(knots: KnotVector, xs: np.ndarray):
    lo, hi = knots.knots[0], knots.knots[-1]
    bad = ~np.isfinite(xs) | (xs < lo) | (xs > hi)
    if np.any(bad):
        p = int(np.flatnonzero(bad)[0])
        raise DomainError(f"xs[{p}] = {float(xs[p])!r} lies outside the knot range [{float(lo)}, {float(hi)}]")


def eval_all_basis(knots: KnotVector, x) -> np.ndarray:
    """All ``n_basis`` basis values at a single abscissa."""
    return design_matrix(knots, np.array([x], dtype=float))[0]


def design_matrix(knots: KnotVector, xs) -> np.ndarray:
    """Dense ``m x n_basis`` matrix of basis values, one row per abscissa."""
    xs = np.asarray(xs, dtype=float).ravel()
    _check_domain(knots, xs)
    out = np.zeros((xs.size, knots.n_basis))
    if xs.size == 0:
        return out
    first, vals = _nonzero_basis(knots, xs)
    rows = np.repeat(np.arange(xs.size), knots.order)
    cols = (first[:, None] + np.arange(knots.order)).ravel()
    keep = (cols >= 0) & (cols < knots.n_basis)
    out[rows[keep], cols[keep]] = vals.ravel()[keep]
    return out


def greville(knots: KnotVector) -> np.ndarray:
    """Greville abscissae (knot averages) of the basis functions."""
    k = knots.order
    t = knots.knots
    return np.array([t[i + 1 : i + k].mean() for i in range(knots.n_basis)])


def _inv(v):
    # 1/0 is taken as 0 for coincident knots
    return 0.0 if v == 0 else 1.0 / v


def piecewise_coeffs(knots: KnotVector, i: int) -> IntervalPolyCoeffs:
    """Monomial coefficients of the cubic pieces on interval ``[t[i], t[i+1])``.

    Columns belonging to basis indices outside ``[0, n_basis)`` are zero.
    """
    if knots.order != 4:
        raise ValueError("piecewise coefficients are defined for order 4 only")
    t = knots.knots
    if not 0 <= i < t.size - 1:
        raise IndexError(f"interval index {i} out of range")
    if not t[i] < t[i + 1]:
        raise DegenerateIntervalError(f"interval {i} is empty (t[{i}] = t[{i + 1}] = {t[i]})")
    return _piecewise_table(knots, i)


def _piecewise_table(knots: KnotVector, i: int) -> IntervalPolyCoeffs:
    t = knots.knots
    n = knots.n_basis

    def T(j):
        return float(t[j]) if 0 <= j < t.size else np.nan

    tm2, tm1, t0, t1, t2, t3 = (T(i + d) for d in range(-2, 4))
    h = _inv(t1 - t0)
    b_m3 = _inv(t1 - tm2) * _inv(t1 - tm1) * h
    b_m2 = _inv(t2 - tm1) * _inv(t1 - tm1) * h
    b_m1 = _inv(t2 - tm1) * _inv(t2 - t0) * h
    b_m4 = _inv(t3 - t0) * _inv(t2 - t0) * h

    a = np.zeros((4, 4))
    cols = [i - 3 + v for v in range(4)]
    valid = [0 <= j < n for j in cols]
    if valid[0]:
        a[:, 0] = [t1**3 * b_m3, -3 * t1**2 * b_m3, 3 * t1 * b_m3, -b_m3]
    if valid[1]:
        a[3, 1] = b_m3 + b_m2 + b_m1
        a[2, 1] = -(tm2 + 2 * t1) * b_m3 - (tm1 + t1 + t2) * b_m2 - (t0 + 2 * t2) * b_m1
        a[1, 1] = (
            (2 * tm2 * t1 + t1**2) * b_m3
            + (tm1 * t1 + tm1 * t2 + t1 * t2) * b_m2
            + (2 * t0 * t2 + t2**2) * b_m1
        )
        a[0, 1] = -tm2 * t1**2 * b_m3 - tm1 * t1 * t2 * b_m2 - t0 * t2**2 * b_m1
    if valid[2]:
        a[3, 2] = -b_m4 - b_m2 - b_m1
        a[2, 2] = (t3 + 2 * t0) * b_m4 + (t1 + 2 * tm1) * b_m2 + (t2 + t0 + tm1) * b_m1
        a[1, 2] = (
            -(t0**2 + 2 * t3 * t0) * b_m4
            - (2 * t1 * tm1 + tm1**2) * b_m2
            - (t2 * (tm1 + t0) + tm1 * t0) * b_m1
        )
        a[0, 2] = t3 * t0**2 * b_m4 + t1 * tm1**2 * b_m2 + t2 * t0 * tm1 * b_m1
    if valid[3]:
        a[:, 3] = [-(t0**3) * b_m4, 3 * t0**2 * b_m4, -3 * t0 * b_m4, b_m4]
    return IntervalPolyCoeffs(i, a)


def uniform_piecewise_coeffs(t_i, delta, interval_index=-1) -> IntervalPolyCoeffs:
    """Closed-form table of :func:`piecewise_coeffs` for equally spaced knots."""
    if not delta > 0:
        raise ValueError(f"spacing must be positive, got {delta}")
    t = float(t_i)
    d = float(delta)
    s = 1.0 / d**3
    a = np.empty((4, 4))
    a[:, 0] = np.array([(t + d) ** 3 / 6, -((t + d) ** 2) / 2, (t + d) / 2, -1 / 6]) * s
    a[:, 1] = (
        np.array(
            [
                (-3 * t**3 - 6 * t**2 * d + 4 * d**3) / 6,
                (3 * t**2 + 4 * t * d) / 2,
                -(3 * t + 2 * d) / 2,
                1 / 2,
            ]
        )
        * s
    )
    a[:, 2] = (
        np.array(
            [
                (3 * t**3 + 3 * t**2 * d - 3 * t * d**2 + d**3) / 6,
                (-3 * t**2 - 2 * t * d + d**2) / 2,
                (3 * t + d) / 2,
                -1 / 2,
            ]
        )
        * s
    )
    a[:, 3] = np.array([-(t**3) / 6, t**2 / 2, -t / 2, 1 / 6]) * s
    return IntervalPolyCoeffs(interval_index, a)


def eval_spline(model: SplineModel, x):
    """Evaluate ``sum_j alpha_j B_j(x)`` at a scalar or an array of abscissae."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = design_matrix(model.knots, xs.ravel()) @ model.alpha
    if scalar:
        return float(vals[0])
    return vals.reshape(xs.shape)

"""Markov-Lukacs certificates for nonnegative cubic splines.

A cubic ``p`` is nonnegative on ``[a, b]`` iff

    p(x) = (x - a) * (c11 x^2 + 2 c12 x + c22) + (b - x) * (d11 x^2 + 2 d12 x + d22)

with ``[[c11, c12], [c12, c22]]`` and ``[[d11, d12], [d12, d22]]`` positive
semidefinite. Matching monomial coefficients gives four linear equations per
interval; the PSD conditions become rotated cones ``(c11, c22, sqrt(2) c12)``.

Certificate triples are always stored in the order ``(c11, c22, c12)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bspline import KnotVector, SplineModel, _piecewise_table, eval_spline
from .exceptions import DegenerateIntervalError, DomainError

__all__ = [
    "CubicCertificate",
    "CubicConstraints",
    "NonnegSystem",
    "certificate_block",
    "cubic_nonneg_constraints",
    "cubic_from_certificate",
    "find_certificate",
    "spline_nonneg_system",
    "certificate_to_global",
    "constraint_rank",
    "min_on_grid",
    "local_cubic",
    "interval_minima",
]


@dataclass(frozen=True)
class CubicCertificate:
    """PSD pair ``(C, D)`` witnessing nonnegativity on one interval."""

    interval_index: int
    c: tuple
    d: tuple

    def is_psd(self, tol=0.0) -> bool:
        ok = True
        for c11, c22, c12 in (self.c, self.d):
            ok &= c11 >= -tol and c22 >= -tol and c12 * c12 <= c11 * c22 + tol
        return bool(ok)


@dataclass(frozen=True, eq=False)
class CubicConstraints:
    """Linear system ``G @ (c11, c22, c12, d11, d22, d12) = beta``.

    ``cones`` lists the two index triples that must lie in the PSD cone.
    """

    G: np.ndarray
    rhs: np.ndarray
    cones: tuple = ((0, 1, 2), (3, 4, 5))

    def residual(self, c, d) -> np.ndarray:
        return self.G @ np.concatenate([c, d]) - self.rhs


@dataclass(frozen=True, eq=False)
class NonnegSystem:
    """Homogeneous equality block coupling coefficients to certificates.

    Columns are ``alpha`` (``n_alpha`` of them) followed by six certificate
    columns ``(c11, c22, c12, d11, d22, d12)`` per interval.
    """

    n_alpha: int
    intervals: tuple
    matrix: sp.csr_matrix
    cone_blocks: tuple

    @property
    def n_intervals(self) -> int:
        return len(self.intervals)

    @property
    def rhs(self) -> np.ndarray:
        return np.zeros(self.matrix.shape[0])

    def certificate_columns(self, p: int) -> np.ndarray:
        """Column indices of interval ``p``'s six certificate variables."""
        start = self.n_alpha + 6 * p
        return np.arange(start, start + 6)


def certificate_block(t_lo, t_hi) -> np.ndarray:
    """4x6 map from ``(c11, c22, c12, d11, d22, d12)`` to ``(b3, b2, b1, b0)``."""
    a, b = float(t_lo), float(t_hi)
    return np.array(
        [
            [1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
            [-a, 0.0, 2.0, b, 0.0, -2.0],
            [0.0, 1.0, -2.0 * a, 0.0, -1.0, 2.0 * b],
            [0.0, -a, 0.0, 0.0, b, 0.0],
        ]
    )


def cubic_nonneg_constraints(beta, t_lo, t_hi) -> CubicConstraints:
    """Certificate system for the cubic ``b3 x^3 + b2 x^2 + b1 x + b0`` on ``[t_lo, t_hi]``."""
    if not t_lo < t_hi:
        raise DomainError(f"need t_lo < t_hi, got [{t_lo}, {t_hi}]")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (4,):
        raise ValueError("beta must hold four coefficients (b3, b2, b1, b0)")
    return CubicConstraints(certificate_block(t_lo, t_hi), beta.copy())


def cubic_from_certificate(c, d, t_lo, t_hi) -> np.ndarray:
    """Coefficients ``(b3, b2, b1, b0)`` of the cubic a certificate represents."""
    return certificate_block(t_lo, t_hi) @ np.concatenate([c, d])


def find_certificate(beta, t_lo, t_hi, tol=1e-8, max_iter=100):
    """Search for a certificate with the conic solver.

    Returns
    -------
    cert : CubicCertificate or None
        ``None`` when the solver proves the system infeasible.
    solution : Solution
        The raw solver output.
    """
    from .conic import Cone, ConeProgram, solve

    cons = cubic_nonneg_constraints(beta, t_lo, t_hi)
    # rotated-cone coordinates carry sqrt(2) * c12
    scale = np.array([1.0, 1.0, np.sqrt(0.5)] * 2)
    prog = ConeProgram(
        c=np.zeros(6),
        A=sp.csr_matrix(cons.G * scale),
        b=cons.rhs,
        cones=[Cone("rotated_second_order", 3), Cone("rotated_second_order", 3)],
    )
    sol = solve(prog, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        return None, sol
    v = sol.x * scale
    return CubicCertificate(-1, tuple(v[:3]), tuple(v[3:])), sol


def spline_nonneg_system(knots: KnotVector, allow_degenerate=False, local=False) -> NonnegSystem:
    """Equality rows asserting nonnegativity of every cubic piece.

    One block of four rows per interval of the base interval. Empty
    intervals raise :class:`DegenerateIntervalError` unless
    ``allow_degenerate`` is set, in which case they contribute a block whose
    coefficient part vanishes (useful for rank diagnostics only).

    With ``local=True`` each block is written in the interval's own
    coordinate ``s = (x - t[i]) / (t[i+1] - t[i])``, so the certificate lives
    on ``[0, 1]``. The feasible coefficient set is unchanged; see
    :func:`certificate_to_global` for mapping certificates back.
    """
    if knots.order != 4:
        raise ValueError("nonnegativity certificates are implemented for order 4 only")
    t = knots.knots
    intervals = knots.intervals(nonempty=not allow_degenerate)
    if not allow_degenerate:
        empty = [i for i in knots.intervals(nonempty=False) if i not in intervals]
        if empty:
            i = empty[0]
            raise DegenerateIntervalError(
                f"interval {i} is empty (t[{i}] = t[{i + 1}] = {t[i]})"
            )
    n = knots.n_basis
    rows, cols, vals = [], [], []
    cone_blocks = []
    for p, i in enumerate(intervals):
        if local and t[i] < t[i + 1]:
            unit = KnotVector((t - t[i]) / (t[i + 1] - t[i]), knots.order)
            a = _piecewise_table(unit, i).a
            lo, hi = 0.0, 1.0
        else:
            a = _piecewise_table(knots, i).a
            lo, hi = t[i], t[i + 1]
        base = 4 * p
        for r, u in enumerate((3, 2, 1, 0)):
            for v in range(4):
                j = i - 3 + v
                if 0 <= j < n and a[u, v] != 0.0:
                    rows.append(base + r)
                    cols.append(j)
                    vals.append(a[u, v])
        G = certificate_block(lo, hi)
        start = n + 6 * p
        rr, cc = np.nonzero(G)
        rows.extend(base + rr)
        cols.extend(start + cc)
        vals.extend(-G[rr, cc])
        cone_blocks.append((start, start + 1, start + 2))
        cone_blocks.append((start + 3, start + 4, start + 5))
    shape = (4 * len(intervals), n + 6 * len(intervals))
    M = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    return NonnegSystem(n, tuple(intervals), M, tuple(cone_blocks))


def certificate_to_global(cert: CubicCertificate, t_lo, t_hi) -> CubicCertificate:
    """Map a certificate in the local coordinate of ``[t_lo, t_hi]`` to ``x``.

    With ``s = (x - t_lo) / h`` the local quadratic forms satisfy
    ``C = T' C_local T / h`` where ``T = [[1/h, -t_lo/h], [0, 1]]``,
    a congruence, so positive semidefiniteness carries over.
    """
    h = float(t_hi) - float(t_lo)
    T = np.array([[1.0 / h, -float(t_lo) / h], [0.0, 1.0]])

    def conv(triple):
        c11, c22, c12 = triple
        M = T.T @ np.array([[c11, c12], [c12, c22]]) @ T / h
        return (M[0, 0], M[1, 1], M[0, 1])

    return CubicCertificate(cert.interval_index, conv(cert.c), conv(cert.d))


def constraint_rank(system: NonnegSystem, rtol=1e-10) -> int:
    """Numerical rank of the equality matrix (singular values above ``rtol * s_max``)."""
    M = system.matrix.toarray()
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * s[0]))


def min_on_grid(model: SplineModel, n_points=10_000) -> float:
    """Smallest spline value over ``n_points`` equally spaced abscissae of the base interval."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    lo, hi = model.knots.base_interval
    return float(np.min(eval_spline(model, np.linspace(lo, hi, n_points))))


def local_cubic(knots: KnotVector, i: int, alpha) -> np.ndarray:
    """Coefficients ``(b3, b2, b1, b0)`` of piece ``i`` in ``s = (x - t[i]) / (t[i+1] - t[i])``."""
    t = knots.knots
    if not t[i] < t[i + 1]:
        raise DegenerateIntervalError(f"interval {i} is empty (t[{i}] = t[{i + 1}] = {t[i]})")
    unit = KnotVector((t - t[i]) / (t[i + 1] - t[i]), knots.order)
    a = _piecewise_table(unit, i).a
    alpha = np.asarray(alpha, dtype=float)
    local = np.zeros(4)
    for v in range(4):
        j = i - 3 + v
        if 0 <= j < alpha.size:
            local[v] = alpha[j]
    return (a @ local)[::-1]


def interval_minima(model: SplineModel):
    """Exact minimum of every cubic piece over its closed interval.

    Returns
    -------
    values : ndarray
        Minimum per nonempty interval.
    where : ndarray
        Abscissa attaining it (the left endpoint on ties).
    intervals : tuple
        Interval indices, in order.
    """
    knots = model.knots
    t = knots.knots
    intervals = knots.intervals()
    values = np.empty(len(intervals))
    where = np.empty(len(intervals))
    for p, i in enumerate(intervals):
        b3, b2, b1, b0 = local_cubic(knots, i, model.alpha)
        cand = [0.0, 1.0]
        roots = np.roots([3.0 * b3, 2.0 * b2, b1]) if (b3 or b2) else np.zeros(0)
        cand += [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0]
        cand = np.array(cand)
        vals = ((b3 * cand + b2) * cand + b1) * cand + b0
        k = int(np.argmin(vals))
        values[p] = vals[k]
        where[p] = t[i] + cand[k] * (t[i + 1] - t[i])
    return values, where, tuple(intervals)

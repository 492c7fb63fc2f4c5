"""Cone-program formulations of nonnegative P-spline regression.

Two equivalent programs are built:

* Model I minimises ``z`` with ``(z, residuals, sqrt(lam) * D'alpha)`` in a
  single Lorentz cone, i.e. the square root of the penalised loss.
* Model II minimises ``sum(u) + lam * sum(v)`` with each squared residual and
  each squared second difference bounded through a 3-dimensional cone
  ``(u + 1, u - 1, 2 r)``.

:func:`fit_nonneg` is the fitting driver: it solves one of the programs and
then polishes the coefficients on the active set the solver identified.

Both carry the per-interval certificate rows of :mod:`nnpspline.nonneg`,
written in each interval's local coordinate so that every row has
coefficients of order one; certificates are mapped back to ``x`` on
extraction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve

from .bspline import KnotVector, SplineModel, _piecewise_table, design_matrix
from .conic import Cone, ConeProgram, Solution, SolverSettings, solve
from .exceptions import DegenerateIntervalError, DomainError, RankDeficiencyError, SolverError
from .nonneg import (
    CubicCertificate,
    certificate_to_global,
    interval_minima,
    spline_nonneg_system,
)

__all__ = [
    "FitProblem",
    "VariableLayout",
    "second_diff_matrix",
    "penalized_loss",
    "spd_factor",
    "spd_solve",
    "normal_matrix",
    "unconstrained_fit",
    "build_model_I",
    "build_model_II",
    "build_model",
    "extract_model",
    "ConstrainedFit",
    "polish_fit",
    "fit_nonneg",
]

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Data, knots and smoothing weight of one penalised fit."""

    x: np.ndarray
    y: np.ndarray
    knots: KnotVector
    lam: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("a fit needs at least one sample")
        if x.shape != y.shape:
            raise ValueError(f"x and y lengths differ ({x.size} != {y.size})")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        if not self.lam >= 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        lo, hi = self.knots.knots[0], self.knots.knots[-1]
        bad = ~np.isfinite(x) | (x < lo) | (x > hi)
        if np.any(bad):
            p = int(np.flatnonzero(bad)[0])
            raise DomainError(f"x[{p}] = {float(x[p])!r} lies outside the knot range [{float(lo)}, {float(hi)}]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def m(self) -> int:
        return self.x.size

    def design(self) -> np.ndarray:
        return design_matrix(self.knots, self.x)


@dataclass(frozen=True, eq=False)
class VariableLayout:
    """Where each named variable group lives in the cone program.

    ``groups`` maps a name to an integer index array; ``cert_scale`` holds
    the factor turning a stored certificate coordinate back into the
    natural ``(c11, c22, c12)`` units.
    """

    model: str
    groups: dict
    knots: KnotVector
    intervals: tuple
    n_var: int
    cert_scale: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, name) -> np.ndarray:
        return self.groups[name]


def second_diff_matrix(n) -> np.ndarray:
    """``n x (n-2)`` matrix ``D`` with ``(D' a)_j = a_{j+2} - 2 a_{j+1} + a_j``."""
    if n < 3:
        raise ValueError(f"second differences need n >= 3, got {n}")
    return np.diff(np.eye(n), 2, axis=0).T.copy()


def penalized_loss(problem: FitProblem, alpha) -> float:
    """Residual sum of squares plus ``lam`` times the squared second differences."""
    alpha = np.asarray(alpha, dtype=float)
    r = problem.y - problem.design() @ alpha
    d2 = np.diff(alpha, 2)
    return float(r @ r + problem.lam * (d2 @ d2))


def spd_factor(M) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    RankDeficiencyError
        If a pivot is nonpositive or negligible against the largest diagonal.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(M)
        raise RankDeficiencyError(
            f"normal matrix is not positive definite (smallest eigenvalue {w[0]:.3e})",
            pivot=float(w[0]),
        ) from None
    piv = np.diag(L) ** 2
    smallest = float(piv.min())
    if smallest <= n * np.finfo(float).eps * float(np.max(np.diag(M))):
        raise RankDeficiencyError(
            f"normal matrix is singular to working precision (smallest pivot {smallest:.3e})",
            pivot=smallest,
        )
    return L


def spd_solve(M, rhs):
    """Cholesky solve of a symmetric positive definite system (see :func:`spd_factor`)."""
    return cho_solve((spd_factor(M), True), rhs)


def normal_matrix(X, lam) -> np.ndarray:
    """``X'X + lam D D'`` for the second-difference matrix ``D``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    M = X.T @ X
    if n >= 3 and lam > 0:
        D = second_diff_matrix(n)
        M = M + lam * (D @ D.T)
    return M


def unconstrained_fit(problem: FitProblem) -> SplineModel:
    """Solve ``(X'X + lam D D') alpha = X'y``."""
    X = problem.design()
    alpha = spd_solve(normal_matrix(X, problem.lam), X.T @ problem.y)
    return SplineModel(problem.knots, alpha)


class _Builder:
    """Accumulates cone blocks and equality rows in coordinate order."""

    def __init__(self):
        self.cones = []
        self.n = 0
        self.rows, self.cols, self.vals = [], [], []
        self.b = []
        self.c = {}

    def block(self, kind, dim):
        idx = np.arange(self.n, self.n + dim)
        self.cones.append(Cone(kind, dim))
        self.n += dim
        return idx

    def row(self, cols, vals, rhs):
        r = len(self.b)
        self.rows.extend([r] * len(cols))
        self.cols.extend(cols)
        self.vals.extend(vals)
        self.b.append(rhs)

    def rows_from(self, M, col_map, rhs):
        """Append rows of sparse ``M`` with its columns relabelled by ``col_map``."""
        M = sp.coo_matrix(M)
        r0 = len(self.b)
        self.rows.extend(r0 + M.row)
        self.cols.extend(col_map[M.col])
        self.vals.extend(M.data)
        self.b.extend(np.broadcast_to(rhs, (M.shape[0],)))

    def program(self) -> ConeProgram:
        c = np.zeros(self.n)
        for j, v in self.c.items():
            c[j] = v
        A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.b), self.n))
        return ConeProgram(c, A, np.asarray(self.b, dtype=float), self.cones)


def _check_problem(problem: FitProblem):
    knots = problem.knots
    if knots.order != 4:
        raise ValueError("cone formulations are implemented for cubic (order 4) splines")
    if not knots.has_distinct_interior():
        raise DegenerateIntervalError("fitting requires distinct interior knots")
    if knots.n_basis < 3:
        raise ValueError("need at least three basis functions")


def _certificate_rows(bld: _Builder, knots: KnotVector, alpha_idx):
    """Add the nonnegativity rows and the rotated certificate cones."""
    system = spline_nonneg_system(knots, local=True)
    nI = system.n_intervals
    # rotated cones hold (c11, c22, sqrt(2) c12)
    cert_cols = np.concatenate([bld.block("rotated_second_order", 3) for _ in range(2 * nI)])
    scale = np.tile([1.0, 1.0, _SQRT_HALF], 2 * nI)
    M = system.matrix.tocsc().astype(float)
    M = M @ sp.diags(np.r_[np.ones(system.n_alpha), scale])
    col_map = np.r_[alpha_idx, cert_cols]
    bld.rows_from(M, col_map, 0.0)
    return cert_cols, scale, system.intervals


def build_model_I(problem: FitProblem):
    """Norm-epigraph formulation; returns ``(ConeProgram, VariableLayout)``."""
    _check_problem(problem)
    knots = problem.knots
    n, m = knots.n_basis, problem.m
    X = problem.design()
    bld = _Builder()
    alpha = bld.block("free", n)
    cert, scale, intervals = _certificate_rows(bld, knots, alpha)
    big = bld.block("second_order", 1 + m + (n - 2))
    z, res, pen = big[0], big[1 : 1 + m], big[1 + m :]
    # res_p + X_p alpha = y_p
    bld.rows_from(sp.hstack([sp.eye(m), sp.csr_matrix(X)]), np.r_[res, alpha], problem.y)
    # pen_q - sqrt(lam) (D'alpha)_q = 0
    Dt = sp.csr_matrix(second_diff_matrix(n).T)
    bld.rows_from(
        sp.hstack([sp.eye(n - 2), -np.sqrt(problem.lam) * Dt]), np.r_[pen, alpha], 0.0
    )
    bld.c[int(z)] = 1.0
    prog = bld.program()
    groups = {"alpha": alpha, "cert": cert, "z": np.array([z]), "residual": res, "penalty": pen}
    layout = VariableLayout("I", groups, knots, intervals, prog.n_var, scale)
    return prog, layout


PENALTY_SCALE_THRESHOLD = 1e4


def build_model_II(problem: FitProblem, scaled_penalty=None):
    """Sum-of-squares formulation; returns ``(ConeProgram, VariableLayout)``.

    With ``lam == 0`` the penalty variables and their cones are omitted.

    By default each penalty bound ``v_q >= (D'alpha)_q^2`` carries the
    weight ``lam`` in the objective. With ``scaled_penalty`` the bound is
    written for ``w_q = lam v_q`` instead, as ``(w + 1, w - 1, 2 sqrt(lam)
    D'alpha)`` with unit objective weight; the optimum is the same but the
    program stays well scaled for large ``lam``. ``None`` selects the
    scaled form when ``lam`` exceeds :data:`PENALTY_SCALE_THRESHOLD`.
    """
    _check_problem(problem)
    knots = problem.knots
    n, m = knots.n_basis, problem.m
    X = sp.csr_matrix(problem.design())
    with_penalty = problem.lam > 0
    bld = _Builder()
    alpha = bld.block("free", n)
    u = bld.block("free", m)
    v = bld.block("free", n - 2) if with_penalty else np.zeros(0, dtype=int)
    cert, scale, intervals = _certificate_rows(bld, knots, alpha)
    datum = np.stack([bld.block("second_order", 3) for _ in range(m)])
    I_m = sp.eye(m)
    # (u + 1, u - 1, 2 (y - X alpha)) in Q3
    bld.rows_from(sp.hstack([I_m, -I_m]), np.r_[datum[:, 0], u], 1.0)
    bld.rows_from(sp.hstack([I_m, -I_m]), np.r_[datum[:, 1], u], -1.0)
    bld.rows_from(sp.hstack([I_m, 2.0 * X]), np.r_[datum[:, 2], alpha], 2.0 * problem.y)
    groups = {"alpha": alpha, "cert": cert, "u": u, "v": v, "datum_cones": datum.ravel()}
    if with_penalty:
        k = n - 2
        pcone = np.stack([bld.block("second_order", 3) for _ in range(k)])
        I_k = sp.eye(k)
        Dt = sp.csr_matrix(second_diff_matrix(n).T)
        bld.rows_from(sp.hstack([I_k, -I_k]), np.r_[pcone[:, 0], v], 1.0)
        bld.rows_from(sp.hstack([I_k, -I_k]), np.r_[pcone[:, 1], v], -1.0)
        if scaled_penalty is None:
            scaled_penalty = problem.lam > PENALTY_SCALE_THRESHOLD
        weight = np.sqrt(problem.lam) if scaled_penalty else 1.0
        bld.rows_from(sp.hstack([I_k, -2.0 * weight * Dt]), np.r_[pcone[:, 2], alpha], 0.0)
        groups["penalty_cones"] = pcone.ravel()
        for j in v:
            bld.c[int(j)] = 1.0 if scaled_penalty else problem.lam
    for j in u:
        bld.c[int(j)] = 1.0
    prog = bld.program()
    layout = VariableLayout("II", groups, knots, intervals, prog.n_var, scale)
    return prog, layout


def build_model(problem: FitProblem, model="II"):
    if model in ("I", 1, "1"):
        return build_model_I(problem)
    if model in ("II", 2, "2"):
        return build_model_II(problem)
    raise ValueError(f"model must be 'I' or 'II', got {model!r}")


def extract_model(solution: Solution, layout: VariableLayout, knots: KnotVector = None) -> SplineModel:
    """Pull coefficients and certificates out of an optimal solution."""
    if solution.status != "optimal":
        raise SolverError(f"cannot extract a model from a {solution.status} solution", solution.status)
    knots = layout.knots if knots is None else knots
    x = np.asarray(solution.x)
    alpha = x[layout["alpha"]]
    cert = x[layout["cert"]] * layout.cert_scale
    certs = []
    for p, i in enumerate(layout.intervals):
        blk = cert[6 * p : 6 * p + 6]
        local = CubicCertificate(i, tuple(blk[:3]), tuple(blk[3:]))
        certs.append(certificate_to_global(local, knots.knots[i], knots.knots[i + 1]))
    return SplineModel(knots, alpha, tuple(certs))


def _normal_equations(problem: FitProblem):
    X = problem.design()
    return normal_matrix(X, problem.lam), X.T @ problem.y


def _basis_jets(knots: KnotVector, x):
    """Rows of all basis values and first and second derivatives at ``x``."""
    t = knots.knots
    n = knots.n_basis
    last = knots.intervals()[-1]
    i = min(max(int(np.searchsorted(t, x, side="right") - 1), knots.order - 1), last)
    h = t[i + 1] - t[i]
    unit = KnotVector((t - t[i]) / h, knots.order)
    a = _piecewise_table(unit, i).a
    u = (x - t[i]) / h
    pw = np.array([1.0, u, u * u, u**3])
    d1 = np.array([0.0, 1.0, 2.0 * u, 3.0 * u * u]) / h
    d2 = np.array([0.0, 0.0, 2.0, 6.0 * u]) / (h * h)
    rows = np.zeros((3, n))
    for v in range(4):
        j = i - 3 + v
        if 0 <= j < n:
            rows[:, j] = [pw @ a[:, v], d1 @ a[:, v], d2 @ a[:, v]]
    return rows


def _contact_newton(H, g, knots, points, free, alpha, max_iter=30):
    """Newton's method for the contact KKT system.

    Unknowns are ``alpha``, one multiplier per contact point and the
    abscissae of the ``free`` (interior) contacts, which must be double
    roots of the spline. Returns ``(alpha, w, points)`` or ``None``.
    """
    n, K = H.shape[0], len(points)
    pts = np.array(points, dtype=float)
    free = np.asarray(free, dtype=bool)
    fi = np.flatnonzero(free)
    J = fi.size
    lo, hi = knots.base_interval
    w = np.zeros(K)
    a = np.array(alpha, dtype=float)
    h_norm = np.max(np.abs(H))
    h_min = float(np.min(np.diff(np.unique(knots.knots))))

    def system(a, w, pts):
        jets = [_basis_jets(knots, p) for p in pts]
        B = np.array([j[0] for j in jets]).reshape(K, n)
        B1 = np.array([jets[k][1] for k in fi]).reshape(J, n)
        B2 = np.array([jets[k][2] for k in fi]).reshape(J, n)
        F = np.r_[H @ a - g + B.T @ w, B @ a, B1 @ a]
        scale = h_norm * np.max(np.abs(a)) + np.max(np.abs(g)) + 1e-300
        return F, scale, B, B1, B2

    # warm start: equality-constrained least squares with the points held fixed
    B0 = np.array([_basis_jets(knots, p)[0] for p in pts]).reshape(K, n)
    kkt = np.block([[H, B0.T], [B0, np.zeros((K, K))]])
    sol = np.linalg.lstsq(kkt, np.r_[g, np.zeros(K)], rcond=None)[0]
    if np.all(np.isfinite(sol)):
        a, w = sol[:n], sol[n:]

    F, scale, B, B1, B2 = system(a, w, pts)
    for _ in range(max_iter):
        M = np.zeros((n + K + J, n + K + J))
        M[:n, :n] = H
        M[:n, n : n + K] = B.T
        M[:n, n + K :] = (B1 * w[fi, None]).T
        M[n : n + K, :n] = B
        M[n + fi, n + K + np.arange(J)] = B1 @ a
        M[n + K :, :n] = B1
        M[n + K :, n + K :] = np.diag(B2 @ a)
        step = np.linalg.lstsq(M, -F, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            return None
        dt = step[n + K :]
        # no contact moves more than a quarter knot spacing per step
        frac = 1.0
        if J:
            frac = min(1.0, float(np.min(0.25 * h_min / np.maximum(np.abs(dt), 1e-300))))
        norm0 = np.linalg.norm(F)
        # backtrack on the residual norm
        while True:
            a1 = a + frac * step[:n]
            w1 = w + frac * step[n : n + K]
            p1 = pts.copy()
            p1[fi] = np.clip(pts[fi] + frac * dt, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
            F1, scale1, B1_, B11, B21 = system(a1, w1, p1)
            if np.linalg.norm(F1) <= (1 - 1e-4 * frac) * norm0 or frac < 1e-6:
                break
            frac *= 0.5
        if frac < 1e-6 and np.linalg.norm(F1) > norm0:
            return None
        a, w, pts = a1, w1, p1
        F, scale, B, B1, B2 = F1, scale1, B1_, B11, B21
        small_step = frac == 1.0 and np.max(np.abs(dt), initial=0.0) <= 1e-12 * (hi - lo)
        if np.max(np.abs(F)) <= 1e-12 * scale and (small_step or not J or np.max(np.abs(dt)) <= 1e-10 * (hi - lo)):
            return a, w, pts
    return None


def polish_fit(problem: FitProblem, alpha, active_tol=None, max_rounds=30):
    """Refine a constrained solution on its set of contact points.

    The points where ``alpha``'s spline nearly touches zero seed an active
    set. For a given set, Newton's method solves the least-squares problem
    with the spline vanishing at every contact and, for contacts inside an
    interval, having zero slope there (the contact abscissa is an unknown).
    Contacts with negative multipliers are dropped and new minima below zero
    are added until the set is consistent. The result is accepted only if it
    is feasible, all multipliers are nonnegative and its loss does not exceed
    that of ``alpha``.

    Returns
    -------
    alpha : ndarray or None
        ``None`` when the refinement did not verify.
    points : ndarray
        Contact abscissae of the accepted solution.
    """
    knots = problem.knots
    t = knots.knots
    alpha0 = np.asarray(alpha, dtype=float)
    scale = max(1.0, float(np.max(np.abs(problem.y))))
    if active_tol is None:
        active_tol = 1e-4 * scale
    feas_tol = 1e-12 * scale
    span = t[-1] - t[0]
    H, g = _normal_equations(problem)

    def at_knot(x):
        return bool(np.any(np.abs(t - x) <= 1e-9 * span))

    vals, where, _ = interval_minima(SplineModel(knots, alpha0))
    # seed value at the solver's solution; the least convincing seed goes first on failure
    seed = {}
    for v, x in zip(vals, where):
        if v <= active_tol:
            seed[x] = min(seed.get(x, np.inf), v)
    points = sorted(seed)
    loss0 = penalized_loss(problem, alpha0)
    for _ in range(max_rounds):
        free = [not at_knot(p) for p in points]
        if points:
            out = _contact_newton(H, g, knots, points, free, alpha0)
            if out is None:
                if len(points) == 1:
                    return None, np.array(points)
                worst = max(points, key=lambda p: seed.get(p, -np.inf))
                points = [p for p in points if p != worst]
                continue
            a_new, w, pts = out
        else:
            a_new, w, pts = np.linalg.solve(H, g), np.zeros(0), np.zeros(0)
        nu = -2.0 * w
        if nu.size and nu.min() < -1e-10 * scale:
            k = int(np.argmin(nu))
            points = [p for j, p in enumerate(pts) if j != k]
            continue
        vals, where, _ = interval_minima(SplineModel(knots, a_new))
        k = int(np.argmin(vals))
        if vals[k] < -feas_tol:
            # exchange step: add the most violated point only
            x = where[k]
            seed[x] = vals[k]
            points = sorted(set(p for p in pts if abs(p - x) > 1e-9 * span) | {x})
            continue
        if penalized_loss(problem, a_new) <= loss0 * (1 + 1e-7) + feas_tol:
            return a_new, np.array(pts)
        return None, np.array(pts)
    return None, np.array(points)


@dataclass(frozen=True, eq=False)
class ConstrainedFit:
    """Result of :func:`fit_nonneg`.

    ``model`` carries the (possibly polished) coefficients; ``solution`` and
    ``layout`` are the raw solver output and its variable map, so
    ``extract_model(solution, layout)`` gives the unpolished coefficients.
    """

    model: SplineModel
    solution: Solution
    layout: VariableLayout
    polished: bool
    contact_points: np.ndarray


def fit_nonneg(problem: FitProblem, model="II", tol=1e-9, settings: SolverSettings = None, polish=True) -> ConstrainedFit:
    """Nonnegative penalised spline fit.

    Parameters
    ----------
    problem : FitProblem
    model : {"II", "I"}
        Cone formulation to solve.
    tol : float, default=1e-9
        Solver tolerance (ignored when ``settings`` is given).
    polish : bool, default=True
        Refine the coefficients on the solver's contact set; the solver's
        coefficients are kept whenever the refinement fails to verify.

    Raises
    ------
    SolverError
        If the solver does not report ``optimal``.
    """
    prog, layout = build_model(problem, model)
    settings = settings or SolverSettings(tol=tol)
    sol = solve(prog, settings=settings)
    raw = extract_model(sol, layout)
    alpha, points, polished = raw.alpha, np.zeros(0), False
    if polish:
        refined, pts = polish_fit(problem, raw.alpha)
        if refined is not None:
            alpha, points, polished = refined, pts, True
    # solver certificates witness the unpolished coefficients only
    certs = () if polished else raw.certificates
    return ConstrainedFit(SplineModel(problem.knots, alpha, certs), sol, layout, polished, points)

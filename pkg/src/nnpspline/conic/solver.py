"""Primal-dual interior-point method for second-order cone programs.

The method follows the homogeneous self-dual embedding

    A x - b tau                  = 0
    -A'y - s + c tau             = 0      (s = 0 on free coordinates)
    b'y - c'x - kappa            = 0
    x, s in K,  tau, kappa >= 0

with Nesterov-Todd scaling and Mehrotra predictor-corrector steps. Rotated
cones are rotated into Lorentz cones before the iteration starts. Each
Newton system is reduced to the quasi-definite matrix

    [ H + reg I   A'     ]
    [ A           -reg I ]

which is factorized once per iteration (SuperLU) and solved with iterative
refinement against the unregularized matrix. Steps are shortened when needed
to stay in a wide neighbourhood of the central path.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import structural_rank

from .cones import Cone, ConeProgram

__all__ = ["Solution", "SolverSettings", "solve", "kkt_residuals", "STATUSES"]

logger = logging.getLogger(__name__)

STATUSES = ("optimal", "primal_infeasible", "dual_infeasible", "max_iterations", "numerical_failure")
_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class SolverSettings:
    """Interior-point parameters.

    ``centrality`` is the wide-neighbourhood bound: a step is shortened until
    every cone keeps ``sqrt(det x det s) >= centrality * mu``.
    """

    tol: float = 1e-8
    max_iter: int = 100
    regularization: float = 1e-8
    refine_steps: int = 2
    step_fraction: float = 0.99
    centrality: float = 1e-3


@dataclass(frozen=True, eq=False)
class Solution:
    """Solver output.

    For ``primal_infeasible`` the pair ``(y, s)`` is a Farkas certificate
    normalised to ``b'y = 1`` (``A'y + s = 0``, ``s`` in the dual cone);
    for ``dual_infeasible`` ``x`` is a ray with ``c'x = -1``, ``A x = 0``.
    """

    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    objective: float
    residuals: tuple
    iterations: int = 0
    info: str = ""
    history: tuple = field(default=(), repr=False)


def kkt_residuals(prog: ConeProgram, x, y, s) -> dict:
    """Relative primal, dual and gap residuals plus cone violations of a point."""
    from .cones import membership

    r_p = np.linalg.norm(prog.A @ x - prog.b) / (1.0 + np.linalg.norm(prog.b))
    r_d = np.linalg.norm(prog.A.T @ y + s - prog.c) / (1.0 + np.linalg.norm(prog.c))
    pcost = float(prog.c @ x)
    gap = abs(pcost - float(prog.b @ y)) / (1.0 + abs(pcost))
    x_viol = s_viol = 0.0
    for cone, sl in prog.cone_slices():
        x_viol = max(x_viol, membership(cone, x[sl]))
        if cone.kind == "free":
            s_viol = max(s_viol, float(np.max(np.abs(s[sl]))))
        else:
            s_viol = max(s_viol, membership(cone, s[sl]))
    return {"primal": r_p, "dual": r_d, "gap": gap, "x_cone": x_viol, "s_cone": s_viol}


# --------------------------------------------------------------------------
# cone bookkeeping on the standardized program


class _Cones:
    """Index sets of the free, nonnegative and Lorentz coordinates."""

    def __init__(self, cones, n):
        free, lp, soc = [], [], {}
        start = 0
        for cone in cones:
            idx = np.arange(start, start + cone.dim)
            if cone.kind == "free":
                free.append(idx)
            elif cone.kind == "nonnegative":
                lp.append(idx)
            else:
                soc.setdefault(cone.dim, []).append(idx)
            start += cone.dim
        assert start == n
        self.n = n
        self.free = np.concatenate(free) if free else np.zeros(0, dtype=int)
        self.lp = np.concatenate(lp) if lp else np.zeros(0, dtype=int)
        self.groups = [np.array(v) for _, v in sorted(soc.items())]
        self.degree = self.lp.size + sum(g.shape[0] for g in self.groups)
        self.conic = np.setdiff1d(np.arange(n), self.free)

        rows, cols = [self.lp], [self.lp]
        for g in self.groups:
            d = g.shape[1]
            rows.append(np.repeat(g, d, axis=1).ravel())
            cols.append(np.tile(g, (1, d)).ravel())
        self.h_rows = np.concatenate(rows)
        self.h_cols = np.concatenate(cols)

    def unit(self):
        e = np.zeros(self.n)
        e[self.lp] = 1.0
        for g in self.groups:
            e[g[:, 0]] = 1.0
        return e

    def jordan(self, u, v):
        out = np.zeros(self.n)
        out[self.lp] = u[self.lp] * v[self.lp]
        for g in self.groups:
            U, V = u[g], v[g]
            out[g[:, 0]] = np.einsum("ij,ij->i", U, V)
            out[g[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def jordan_solve(self, lam, r):
        """Solve ``lam o z = r`` for ``z``."""
        out = np.zeros(self.n)
        # a degenerate iterate yields non-finite entries, which the caller rejects
        with np.errstate(divide="ignore", invalid="ignore"):
            out[self.lp] = r[self.lp] / lam[self.lp]
            for g in self.groups:
                L, R = lam[g], r[g]
                l0, lb = L[:, 0], L[:, 1:]
                det = _jdet(L)
                z0 = (l0 * R[:, 0] - np.einsum("ij,ij->i", lb, R[:, 1:])) / det
                out[g[:, 0]] = z0
                out[g[:, 1:]] = (R[:, 1:] - z0[:, None] * lb) / l0[:, None]
        return out

    def proximity(self, x, s, mu):
        """Smallest per-cone ``sqrt(det x det s) / mu`` (``x_i s_i / mu`` for LP coordinates)."""
        worst = np.inf
        if self.lp.size:
            worst = float(np.min(x[self.lp] * s[self.lp])) / mu
        for g in self.groups:
            d = np.maximum(_jdet(x[g]), 0.0) * np.maximum(_jdet(s[g]), 0.0)
            worst = min(worst, float(np.sqrt(d).min()) / mu)
        return worst

    def max_step(self, v, dv):
        """Largest ``a >= 0`` with ``v + a dv`` in the cone product (``inf`` if unbounded)."""
        amax = np.inf
        if self.lp.size:
            d = dv[self.lp]
            neg = d < 0
            if np.any(neg):
                amax = min(amax, float(np.min(-v[self.lp][neg] / d[neg])))
        for g in self.groups:
            amax = min(amax, _soc_max_step(v[g], dv[g]))
        return amax


def _jdet(V):
    """``v0^2 - |v_bar|^2`` row-wise, factored to limit cancellation."""
    nb = np.linalg.norm(V[:, 1:], axis=1)
    return (V[:, 0] - nb) * (V[:, 0] + nb)


def _soc_max_step(X, D):
    a = D[:, 0] ** 2 - np.einsum("ij,ij->i", D[:, 1:], D[:, 1:])
    b = 2.0 * (X[:, 0] * D[:, 0] - np.einsum("ij,ij->i", X[:, 1:], D[:, 1:]))
    c = _jdet(X)
    steps = np.full(X.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4 * a * c
        has_root = disc >= 0
        sq = np.sqrt(np.where(has_root, disc, 0.0))
        # numerically stable pair of roots
        q = -0.5 * (b + np.copysign(sq, b))
        r1 = np.where(a != 0, q / a, np.inf)
        r2 = np.where(q != 0, c / q, np.inf)
        for r in (r1, r2):
            ok = has_root & (r > 0) & np.isfinite(r)
            steps = np.where(ok, np.minimum(steps, r), steps)
        lin = (a == 0) & (b < 0)
        steps = np.where(lin, np.minimum(steps, -c / b), steps)
        head = D[:, 0] < 0
        steps = np.where(head, np.minimum(steps, -X[:, 0] / D[:, 0]), steps)
    return float(steps.min()) if steps.size else np.inf


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W x = W^{-1} s = lam``."""

    def __init__(self, cones: _Cones, x, s):
        self.cones = cones
        lp = cones.lp
        if np.any(x[lp] <= 0) or np.any(s[lp] <= 0):
            raise FloatingPointError("iterate left the nonnegative orthant")
        self.d = np.sqrt(s[lp] / x[lp])
        self.wbar, self.eta = [], []
        for g in cones.groups:
            X, S = x[g], s[g]
            dx, ds = _jdet(X), _jdet(S)
            if np.any(dx <= 0) or np.any(ds <= 0):
                raise FloatingPointError("iterate left the interior of a second-order cone")
            a = np.sqrt(dx)
            b = np.sqrt(ds)
            xb = X / a[:, None]
            sb = S / b[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", xb, sb)))
            jx = xb.copy()
            jx[:, 1:] *= -1.0
            self.wbar.append((sb + jx) / (2.0 * gamma[:, None]))
            self.eta.append(np.sqrt(b / a))
        self.lam = self.apply(x)

    def apply(self, v, inverse=False):
        out = np.zeros_like(v)
        lp = self.cones.lp
        out[lp] = v[lp] / self.d if inverse else v[lp] * self.d
        for g, w, eta in zip(self.cones.groups, self.wbar, self.eta):
            V = v[g]
            w0, w1 = w[:, 0], w[:, 1:]
            v0, v1 = V[:, 0], V[:, 1:]
            dot = np.einsum("ij,ij->i", w1, v1)
            if inverse:
                head = w0 * v0 - dot
                tail = v1 + ((dot / (1.0 + w0)) - v0)[:, None] * w1
                scale = 1.0 / eta
            else:
                head = w0 * v0 + dot
                tail = v1 + ((dot / (1.0 + w0)) + v0)[:, None] * w1
                scale = eta
            out[g[:, 0]] = scale * head
            out[g[:, 1:]] = scale[:, None] * tail
        return out

    def hessian_data(self):
        """Entries of ``W^2`` in the order of ``_Cones.h_rows / h_cols``."""
        parts = [self.d**2]
        for g, w, eta in zip(self.cones.groups, self.wbar, self.eta):
            d = g.shape[1]
            blk = 2.0 * w[:, :, None] * w[:, None, :]
            blk[:, 0, 0] -= 1.0
            idx = np.arange(1, d)
            blk[:, idx, idx] += 1.0
            parts.append((blk * (eta**2)[:, None, None]).ravel())
        return np.concatenate(parts)


# --------------------------------------------------------------------------
# presolve


@dataclass
class _Presolved:
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    cones: list
    rotation: sp.csr_matrix
    kept_rows: np.ndarray
    infeasible_y: np.ndarray = None
    info: str = ""


def _presolve(prog: ConeProgram) -> _Presolved:
    n, m = prog.n_var, prog.n_eq
    R = sp.lil_matrix((n, n))
    cones = []
    for cone, sl in prog.cone_slices():
        idx = np.arange(sl.start, sl.stop)
        if cone.kind == "rotated_second_order":
            i0, i1 = idx[0], idx[1]
            R[i0, i0] = R[i0, i1] = R[i1, i0] = _SQRT_HALF
            R[i1, i1] = -_SQRT_HALF
            for j in idx[2:]:
                R[j, j] = 1.0
            cones.append(Cone("second_order", cone.dim))
        else:
            for j in idx:
                R[j, j] = 1.0
            cones.append(cone)
    R = R.tocsr()
    A = (prog.A @ R).tocsr()
    c = R @ prog.c
    b = prog.b.copy()

    keep = []
    seen = {}
    infeasible_y = None
    info = []
    for i in range(m):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols = A.indices[lo:hi]
        vals = A.data[lo:hi]
        nz = vals != 0
        if not np.any(nz):
            if b[i] != 0 and infeasible_y is None:
                infeasible_y = np.zeros(m)
                infeasible_y[i] = np.sign(b[i])
                info.append(f"row {i} is empty with nonzero right-hand side")
            continue
        order = np.argsort(cols[nz])
        key = (tuple(cols[nz][order]), tuple(vals[nz][order]))
        if key in seen:
            j = seen[key]
            if b[i] != b[j] and infeasible_y is None:
                infeasible_y = np.zeros(m)
                sgn = np.sign(b[i] - b[j])
                infeasible_y[i], infeasible_y[j] = sgn, -sgn
                info.append(f"rows {j} and {i} are duplicates with different right-hand sides")
            continue
        seen[key] = i
        keep.append(i)
    if len(keep) < m:
        info.append(f"presolve removed {m - len(keep)} empty or duplicate rows")
    kept = np.array(keep, dtype=int)
    return _Presolved(A[kept], b[kept], c, cones, R, kept, infeasible_y, "; ".join(info))


# --------------------------------------------------------------------------
# main loop


class _KKT:
    def __init__(self, A, cones: _Cones, reg, refine_steps):
        self.A = A
        self.AT = A.T.tocsr()
        self.cones = cones
        self.reg = reg
        self.refine_steps = refine_steps
        m, n = A.shape
        self.n, self.m = n, m
        Ac = A.tocoo()
        self.base_rows = np.concatenate([Ac.row + n, Ac.col, np.arange(n + m)])
        self.base_cols = np.concatenate([Ac.col, Ac.row + n, np.arange(n + m)])
        self.base_data = np.concatenate(
            [Ac.data, Ac.data, np.r_[np.full(n, reg), np.full(m, -reg)]]
        )

    def factor(self, scaling: _Scaling):
        hdata = scaling.hessian_data()
        rows = np.concatenate([self.base_rows, self.cones.h_rows])
        cols = np.concatenate([self.base_cols, self.cones.h_cols])
        data = np.concatenate([self.base_data, hdata])
        N = self.n + self.m
        K = sp.csc_matrix((data, (rows, cols)), shape=(N, N))
        self.H = sp.csr_matrix(
            (hdata, (self.cones.h_rows, self.cones.h_cols)), shape=(self.n, self.n)
        )
        self.lu = spla.splu(K, permc_spec="COLAMD")

    def _apply_true(self, z):
        x, w = z[: self.n], z[self.n :]
        return np.concatenate([self.H @ x + self.AT @ w, self.A @ x])

    def solve(self, rhs):
        z = self.lu.solve(rhs)
        for _ in range(self.refine_steps):
            res = rhs - self._apply_true(z)
            z = z + self.lu.solve(res)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite KKT solution")
        return z[: self.n], z[self.n :]


def solve(prog: ConeProgram, tol=1e-8, max_iter=100, settings: SolverSettings = None) -> Solution:
    """Solve a cone program.

    Parameters
    ----------
    prog : ConeProgram
    tol : float, default=1e-8
        Target for the relative primal residual, dual residual and gap.
    max_iter : int, default=100
    settings : SolverSettings, optional
        Overrides ``tol`` and ``max_iter`` when given.

    Returns
    -------
    Solution
    """
    if settings is None:
        settings = SolverSettings(tol=tol, max_iter=max_iter)
    if not settings.tol > 0:
        raise ValueError("tol must be positive")
    pre = _presolve(prog)
    n, m = prog.n_var, prog.n_eq

    def finish(status, x, y, s, iters, info, history=()):
        x = pre.rotation @ x
        s = pre.rotation @ s
        y_full = np.zeros(m)
        y_full[pre.kept_rows] = y
        res = kkt_residuals(prog, x, y_full, s)
        return Solution(
            status,
            x,
            y_full,
            s,
            float(prog.c @ x),
            (res["primal"], res["dual"], res["gap"]),
            iters,
            info,
            tuple(history),
        )

    if pre.infeasible_y is not None:
        sol = Solution(
            "primal_infeasible",
            np.full(n, np.nan),
            pre.infeasible_y / (prog.b @ pre.infeasible_y),
            np.zeros(n),
            np.nan,
            (np.nan, np.nan, np.nan),
            0,
            pre.info,
        )
        return sol
    A, b, c = pre.A, pre.b, pre.c
    m_eq = A.shape[0]
    if m_eq and structural_rank(A) < m_eq:
        return finish(
            "numerical_failure",
            np.zeros(n),
            np.zeros(m_eq),
            np.zeros(n),
            0,
            f"equality block is structurally rank deficient ({structural_rank(A)} < {m_eq})",
        )

    cones = _Cones(pre.cones, n)
    kkt = _KKT(A, cones, settings.regularization, settings.refine_steps)
    e = cones.unit()
    conic = cones.conic
    free = cones.free
    nu = cones.degree

    x = e.copy()
    s = e.copy()
    y = np.zeros(m_eq)
    tau = kappa = 1.0
    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + np.linalg.norm(c)

    best = None
    history = []
    status = "max_iterations"
    info = pre.info
    it = 0
    for it in range(settings.max_iter + 1):
        r_p = A @ x - b * tau
        r_d = c * tau - A.T @ y - s
        r_g = b @ y - c @ x - kappa
        mu = (x[conic] @ s[conic] + tau * kappa) / (nu + 1)

        pcost = c @ x / tau
        dcost = b @ y / tau
        pres = np.linalg.norm(r_p) / tau / nb
        dres = np.linalg.norm(r_d) / tau / nc
        gap = abs(pcost - dcost) / (1.0 + abs(pcost))
        history.append((it, pcost, dcost, pres, dres, gap, tau, kappa, mu))
        logger.debug(
            "it %3d pcost %+.6e dcost %+.6e pres %.1e dres %.1e gap %.1e tau %.1e kappa %.1e",
            it, pcost, dcost, pres, dres, gap, tau, kappa,
        )
        merit = max(pres, dres, gap)
        if best is None or merit < best[0]:
            best = (merit, x / tau, y / tau, s / tau)
        if pres <= settings.tol and dres <= settings.tol and gap <= settings.tol:
            return finish("optimal", x / tau, y / tau, s / tau, it, info, history)

        by, cx = b @ y, c @ x
        if by > 0 and np.linalg.norm(A.T @ y + s) / by <= settings.tol:
            sol = finish("primal_infeasible", np.full(n, np.nan), y / by, s / by, it, info, history)
            return sol
        if cx < 0 and np.linalg.norm(A @ x) / -cx <= settings.tol:
            return finish("dual_infeasible", x / -cx, np.zeros(m_eq), np.zeros(n), it, info, history)
        if it == settings.max_iter:
            break

        try:
            W = _Scaling(cones, x, s)
            kkt.factor(W)
            p2, w2 = kkt.solve(np.concatenate([-c, b]))
            lam = W.lam
            lam_sq = cones.jordan(lam, lam)

            def direction(d_lin, d5, d6):
                d1, d2, d4 = d_lin
                rx = d2.copy()
                rx[conic] += W.apply(cones.jordan_solve(lam, d5))[conic]
                p1, w1 = kkt.solve(np.concatenate([rx, d1]))
                dtau = (d4 + b @ w1 + c @ p1 + d6 / tau) / (kappa / tau - b @ w2 - c @ p2)
                dx = p1 + dtau * p2
                dy = -(w1 + dtau * w2)
                ds = np.zeros(n)
                ds[conic] = (W.apply(cones.jordan_solve(lam, d5)) - kkt.H @ dx)[conic]
                dkappa = (d6 - kappa * dtau) / tau
                return dx, dy, ds, dtau, dkappa

            def step_length(dx, ds, dtau, dkappa):
                a = min(cones.max_step(x, dx), cones.max_step(s, ds))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkappa < 0:
                    a = min(a, -kappa / dkappa)
                return a

            lin = (-r_p, -r_d, -r_g)
            aff = direction(lin, -lam_sq, -tau * kappa)
            a_aff = min(1.0, step_length(aff[0], aff[2], aff[3], aff[4]))
            sigma = (1.0 - a_aff) ** 3

            corr = cones.jordan(W.apply(aff[2], inverse=True), W.apply(aff[0]))
            d5 = -lam_sq - corr + sigma * mu * e
            d6 = -tau * kappa - aff[3] * aff[4] + sigma * mu
            lin = tuple((1.0 - sigma) * v for v in lin)
            dx, dy, ds, dtau, dkappa = direction(lin, d5, d6)
            alpha = min(1.0, settings.step_fraction * step_length(dx, ds, dtau, dkappa))
            # backtrack into a wide neighbourhood of the central path
            for _ in range(50):
                xn, sn = x + alpha * dx, s + alpha * ds
                tn, kn = tau + alpha * dtau, kappa + alpha * dkappa
                mun = (xn[conic] @ sn[conic] + tn * kn) / (nu + 1)
                if min(cones.proximity(xn, sn, mun), tn * kn / mun) >= settings.centrality:
                    break
                alpha *= 0.8
        except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            status = "numerical_failure"
            info = f"{info}; KKT solve failed at iteration {it}: {exc}".lstrip("; ")
            break
        if not np.isfinite(alpha) or alpha <= 1e-12:
            status = "numerical_failure"
            info = f"{info}; step length collapsed at iteration {it}".lstrip("; ")
            break

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        s[free] = 0.0
        tau += alpha * dtau
        kappa += alpha * dkappa

    _, bx, by_, bs = best
    return finish(status, bx, by_, bs, it, info, history)

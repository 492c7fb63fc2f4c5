"""Cones, cone programs and a plain-text program dump.

Dump grammar (one token group per line, numbers in ``%.17g``)::

    CONEPROGRAM 1
    VARIABLES <n>
    CONSTRAINTS <m>
    NONZEROS <nnz>
    CONES <k>
    <kind> <dim>              # k lines, in coordinate order
    OBJECTIVE
    <c_j>                     # n lines
    RHS
    <b_i>                     # m lines
    MATRIX
    <row> <col> <value>       # nnz lines, zero-based, sorted by (row, col)
    END
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CONE_KINDS",
    "Cone",
    "ConeProgram",
    "membership",
    "rotate_to_standard",
    "dump_program",
    "load_program",
]

CONE_KINDS = ("free", "nonnegative", "second_order", "rotated_second_order")
_MIN_DIM = {"free": 1, "nonnegative": 1, "second_order": 2, "rotated_second_order": 3}
_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < _MIN_DIM[self.kind]:
            raise ValueError(
                f"{self.kind} cone needs dim >= {_MIN_DIM[self.kind]}, got {self.dim}"
            )


@dataclass(frozen=True, eq=False)
class ConeProgram:
    """``min c'x  s.t.  A x = b,  x in cones[0] x cones[1] x ...``."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        b = np.array(self.b, dtype=float).ravel()
        A = sp.csr_matrix(self.A, dtype=float)
        cones = tuple(self.cones)
        n = sum(k.dim for k in cones)
        if c.size != n:
            raise ValueError(f"objective has {c.size} entries but cones cover {n} coordinates")
        if A.shape != (b.size, n):
            raise ValueError(f"A has shape {A.shape}, expected ({b.size}, {n})")
        for name, v in (("c", c), ("b", b), ("A", A.data)):
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "cones", cones)

    @property
    def n_var(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.b.size

    def cone_slices(self):
        """Yield ``(cone, slice)`` pairs in coordinate order."""
        start = 0
        for cone in self.cones:
            yield cone, slice(start, start + cone.dim)
            start += cone.dim


def membership(cone: Cone, x) -> float:
    """Distance-like violation of ``x`` from ``cone``; 0 means member."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cone.dim,):
        raise ValueError(f"vector of length {x.size} does not match {cone.kind} cone of dim {cone.dim}")
    if cone.kind == "free":
        return 0.0
    if cone.kind == "nonnegative":
        return max(0.0, float(-x.min()))
    if cone.kind == "second_order":
        return max(0.0, float(np.linalg.norm(x[1:]) - x[0]))
    # rotated: (|xh|^2 - 2 x0 x1) normalised by the length of the equivalent Lorentz vector
    x0, x1, xh = x[0], x[1], x[2:]
    num = float(xh @ xh - 2.0 * x0 * x1)
    den = _SQRT_HALF * (x0 + x1) + np.hypot(_SQRT_HALF * (x0 - x1), np.linalg.norm(xh))
    quad = num / den if den > 0 else max(0.0, num)
    return max(0.0, quad, float(-x0), float(-x1))


def rotate_to_standard(x) -> np.ndarray:
    """Map rotated-cone coordinates to Lorentz-cone coordinates (a symmetric involution)."""
    x = np.array(x, dtype=float)
    if x.size < 3:
        raise ValueError("rotated cone vectors need at least three entries")
    x0, x1 = x[0], x[1]
    x[0] = _SQRT_HALF * (x0 + x1)
    x[1] = _SQRT_HALF * (x0 - x1)
    return x


def _fmt(v) -> str:
    return "%.17g" % v


def dump_program(prog: ConeProgram, fh) -> None:
    """Write ``prog`` to an open text file in the documented dump format."""
    A = prog.A.tocoo()
    order = np.lexsort((A.col, A.row))
    lines = [
        "CONEPROGRAM 1",
        f"VARIABLES {prog.n_var}",
        f"CONSTRAINTS {prog.n_eq}",
        f"NONZEROS {A.nnz}",
        f"CONES {len(prog.cones)}",
    ]
    lines += [f"{k.kind} {k.dim}" for k in prog.cones]
    lines.append("OBJECTIVE")
    lines += [_fmt(v) for v in prog.c]
    lines.append("RHS")
    lines += [_fmt(v) for v in prog.b]
    lines.append("MATRIX")
    lines += [f"{A.row[p]} {A.col[p]} {_fmt(A.data[p])}" for p in order]
    lines.append("END")
    fh.write("\n".join(lines) + "\n")


def load_program(fh) -> ConeProgram:
    """Parse the dump format written by :func:`dump_program`."""
    it = iter(line.strip() for line in fh)

    def expect(keyword):
        parts = next(it).split()
        if not parts or parts[0] != keyword:
            raise ValueError(f"expected {keyword!r}, got {' '.join(parts)!r}")
        return parts[1:]

    if expect("CONEPROGRAM") != ["1"]:
        raise ValueError("unsupported dump version")
    n = int(expect("VARIABLES")[0])
    m = int(expect("CONSTRAINTS")[0])
    nnz = int(expect("NONZEROS")[0])
    k = int(expect("CONES")[0])
    cones = []
    for _ in range(k):
        kind, dim = next(it).split()
        cones.append(Cone(kind, int(dim)))
    expect("OBJECTIVE")
    c = [float(next(it)) for _ in range(n)]
    expect("RHS")
    b = [float(next(it)) for _ in range(m)]
    expect("MATRIX")
    rows, cols, vals = [], [], []
    for _ in range(nnz):
        r, q, v = next(it).split()
        rows.append(int(r))
        cols.append(int(q))
        vals.append(float(v))
    expect("END")
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConeProgram(np.array(c), A, np.array(b), cones)

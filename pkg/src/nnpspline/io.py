"""CSV samples and the ModelFile format.

CSV files have the header ``x,y``, one sample per line, LF line endings and
``.`` as the decimal separator. Numbers are written with 17 significant
digits so that a save/load cycle reproduces every double exactly.

A ModelFile is a JSON document with a fixed field order::

    {
      "schema": "nnpspline-model",
      "version": 1,
      "order": 4,
      "n_interior": <int>,
      "x_range": [<lo>, <hi>],
      "lambda": <float>,
      "knots": [...],
      "alpha": [...],
      "selection": {"asr", "trace_s", "gcv", "aic", "status", "polished", "min_on_grid"},
      "provenance": {"input", "grid": {"lambdas", "knot_counts"} | null,
                     "model", "tol", "created"}
    }

Non-finite statistics are stored as the strings ``"nan"``, ``"inf"`` and
``"-inf"``. ``created`` is derived from ``SOURCE_DATE_EPOCH`` when set and is
``null`` otherwise, which keeps repeated runs byte-identical.
"""

from dataclasses import dataclass, field
import datetime
import json
import math
import os

import numpy as np

from .bspline import KnotVector, SplineModel
from .exceptions import DataError

__all__ = [
    "load_csv",
    "save_csv",
    "format_number",
    "ModelFile",
    "build_timestamp",
]

SCHEMA = "nnpspline-model"
SCHEMA_VERSION = 1
_SELECTION_KEYS = ("asr", "trace_s", "gcv", "aic", "status", "polished", "min_on_grid")
_PROVENANCE_KEYS = ("input", "grid", "model", "tol", "created")


def format_number(v) -> str:
    """17-significant-digit text for a float; ints are written as ints."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def _open_text(path_or_fh, mode):
    if hasattr(path_or_fh, "read" if "r" in mode else "write"):
        return path_or_fh, False
    return open(path_or_fh, mode, encoding="utf-8", newline=""), True


def load_csv(path_or_fh):
    """Read samples from a CSV file with header ``x,y``.

    Returns
    -------
    x, y : ndarray
        Samples in file order; duplicate abscissae are kept.

    Raises
    ------
    DataError
        On a missing or wrong header, a malformed row (the message names the
        line number) or when the file holds no samples.
    """
    fh, owned = _open_text(path_or_fh, "r")
    try:
        lines = fh.read().split("\n")
    finally:
        if owned:
            fh.close()
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError("empty file: expected header 'x,y'")
    header = lines[0].strip().lstrip("\ufeff")
    if header.replace(" ", "") != "x,y":
        raise DataError(f"line 1: expected header 'x,y', got {header!r}")
    xs, ys = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            xv, yv = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric value in {line!r}") from None
        if not (math.isfinite(xv) and math.isfinite(yv)):
            raise DataError(f"line {lineno}: non-finite value in {line!r}")
        xs.append(xv)
        ys.append(yv)
    if not xs:
        raise DataError("no samples after the header")
    return np.array(xs), np.array(ys)


def save_csv(path_or_fh, x, y) -> None:
    """Write samples with header ``x,y`` and 17 significant digits."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y lengths differ")
    text = "x,y\n" + "".join(f"{format_number(a)},{format_number(b)}\n" for a, b in zip(x, y))
    fh, owned = _open_text(path_or_fh, "w")
    try:
        fh.write(text)
    finally:
        if owned:
            fh.close()


def build_timestamp():
    """UTC ISO time from ``SOURCE_DATE_EPOCH``, or ``None`` when it is unset."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None or not epoch.strip():
        return None
    try:
        sec = int(epoch)
    except ValueError:
        raise DataError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from None
    return datetime.datetime.fromtimestamp(sec, datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _emit(v, indent) -> str:
    pad = "  " * indent
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_emit(val, indent + 1)}' for k, val in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_emit(e, indent + 1) for e in v) + "]"
    text = format_number(v)
    if text in ("nan", "inf", "-inf"):
        return json.dumps(text)
    return text


def _real(v, name) -> float:
    if isinstance(v, str) and v in ("nan", "inf", "-inf"):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DataError(f"field {name!r} must be a number, got {v!r}")
    return float(v)


@dataclass(frozen=True, eq=False)
class ModelFile:
    """A fitted spline plus how it was selected.

    ``selection`` and ``provenance`` are plain dicts with the keys listed in
    the module docstring; missing keys are written as ``null``.
    """

    knots: np.ndarray
    alpha: np.ndarray
    lam: float
    n_interior: int
    x_range: tuple
    order: int = 4
    selection: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "knots", np.array(self.knots, dtype=float))
        object.__setattr__(self, "alpha", np.array(self.alpha, dtype=float))
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        unknown = set(self.selection) - set(_SELECTION_KEYS)
        unknown |= {f"provenance.{k}" for k in set(self.provenance) - set(_PROVENANCE_KEYS)}
        if unknown:
            raise ValueError(f"unknown ModelFile field(s): {', '.join(sorted(unknown))}")
        # validates knot/coefficient consistency
        self.spline()

    def spline(self) -> SplineModel:
        return SplineModel(KnotVector(self.knots, self.order), self.alpha)

    def to_dict(self) -> dict:
        sel = {k: self.selection.get(k) for k in _SELECTION_KEYS}
        prov = {k: self.provenance.get(k) for k in _PROVENANCE_KEYS}
        if isinstance(prov["grid"], dict):
            g = prov["grid"]
            prov["grid"] = {"lambdas": list(g.get("lambdas", ())), "knot_counts": [int(k) for k in g.get("knot_counts", ())]}
        return {
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "order": int(self.order),
            "n_interior": int(self.n_interior),
            "x_range": list(self.x_range),
            "lambda": float(self.lam),
            "knots": list(self.knots),
            "alpha": list(self.alpha),
            "selection": sel,
            "provenance": prov,
        }

    def dumps(self) -> str:
        return _emit(self.to_dict(), 0) + "\n"

    def save(self, path_or_fh) -> None:
        fh, owned = _open_text(path_or_fh, "w")
        try:
            fh.write(self.dumps())
        finally:
            if owned:
                fh.close()

    @classmethod
    def from_dict(cls, d) -> "ModelFile":
        if not isinstance(d, dict) or d.get("schema") != SCHEMA:
            raise DataError("not a model file")
        if d.get("version") != SCHEMA_VERSION:
            raise DataError(f"unsupported model file version {d.get('version')!r}")
        try:
            sel = dict(d.get("selection") or {})
            for k in ("asr", "trace_s", "gcv", "aic", "min_on_grid"):
                if sel.get(k) is not None:
                    sel[k] = _real(sel[k], k)
            prov = dict(d.get("provenance") or {})
            if prov.get("tol") is not None:
                prov["tol"] = _real(prov["tol"], "tol")
            if isinstance(prov.get("grid"), dict):
                g = prov["grid"]
                prov["grid"] = {
                    "lambdas": [_real(v, "lambdas") for v in g.get("lambdas", ())],
                    "knot_counts": [int(v) for v in g.get("knot_counts", ())],
                }
            return cls(
                knots=[_real(v, "knots") for v in d["knots"]],
                alpha=[_real(v, "alpha") for v in d["alpha"]],
                lam=_real(d["lambda"], "lambda"),
                n_interior=int(d["n_interior"]),
                x_range=[_real(v, "x_range") for v in d["x_range"]],
                order=int(d["order"]),
                selection=sel,
                provenance=prov,
            )
        except KeyError as exc:
            raise DataError(f"model file lacks field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"invalid model file: {exc}") from None

    @classmethod
    def loads(cls, text) -> "ModelFile":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"model file is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path_or_fh) -> "ModelFile":
        fh, owned = _open_text(path_or_fh, "r")
        try:
            return cls.loads(fh.read())
        finally:
            if owned:
                fh.close()

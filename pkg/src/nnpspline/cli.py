"""Command-line interface: ``fit``, ``eval`` and ``gen``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

import argparse
import sys

import numpy as np

from ._validation import check_range
from .bspline import eval_spline, make_uniform_knots
from .conic import dump_program
from .exceptions import DataError, DegenerateIntervalError, DomainError, SelectionError, SolverError
from .formulate import FitProblem, build_model
from .generators import FAMILIES, GeneratorSpec, generate
from .io import ModelFile, build_timestamp, format_number, load_csv, save_csv
from .modelselect import DEFAULT_KNOT_COUNTS, DEFAULT_LAMBDAS, SelectionGrid, select_model, write_report
from .nonneg import min_on_grid

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_SOLVER"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
AUDIT_POINTS = 10_000
AUDIT_TOL = -1e-8
_DATA_STATUSES = ("rank_deficient", "degenerate_dof")


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text, cast=float):
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None


def _int_pair(text):
    return _pair(text, int)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _params(text):
    out = {}
    for item in (p for p in text.split(",") if p.strip()):
        key, sep, val = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected k=v, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"parameter {key.strip()!r} is not a number") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nnpspline", description="Nonnegative cubic P-spline fitting.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("fit", help="fit a model to CSV samples")
    f.add_argument("--input", required=True, help="CSV with header x,y")
    f.add_argument("--output", required=True, help="model file to write")
    lam = f.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, help="fixed smoothing weight")
    lam.add_argument("--scan", action="store_true", help="choose the weight by GCV (default)")
    f.add_argument("--lambdas", type=_float_list, help="weights scanned with --scan")
    knots = f.add_mutually_exclusive_group()
    knots.add_argument("--knots", type=int, help="fixed number of interior knots")
    knots.add_argument("--knots-range", type=_int_pair, help="interior knot counts a:b, inclusive")
    f.add_argument("--x-range", type=_pair, help="knot range lo:hi (default: data range)")
    f.add_argument("--tol", type=float, default=1e-9)
    f.add_argument("--model", choices=("I", "II"), default="II", help="cone formulation")
    f.add_argument("--report", help="write the per-cell statistics as CSV")
    f.add_argument("--jobs", type=int, help="fit grid cells in parallel")
    f.add_argument("--dump-program", help="write the winning cell's cone program")

    e = sub.add_parser("eval", help="evaluate a fitted model")
    e.add_argument("--model", required=True, help="model file")
    e.add_argument("--points", type=int, default=101, help="grid size over the model range")
    e.add_argument("--at", type=float, help="evaluate at a single abscissa")
    e.add_argument("--output", help="CSV to write (default: stdout)")

    g = sub.add_parser("gen", help="sample a density family with noise")
    g.add_argument("--family", required=True, choices=sorted(FAMILIES))
    g.add_argument("--params", type=_params, default={}, help="k=v,... overriding the defaults")
    g.add_argument("--range", type=_pair, required=True, help="abscissa range a:b")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", help="CSV to write (default: stdout)")
    return p


def _grid(args) -> SelectionGrid:
    if args.lam is not None:
        lambdas = (args.lam,)
    else:
        lambdas = tuple(args.lambdas) if args.lambdas else DEFAULT_LAMBDAS
    if args.knots is not None:
        counts = (args.knots,)
    elif args.knots_range is not None:
        a, b = args.knots_range
        if a > b:
            raise UsageError(f"--knots-range needs a <= b, got {a}:{b}")
        counts = tuple(range(a, b + 1))
    else:
        counts = DEFAULT_KNOT_COUNTS
    try:
        return SelectionGrid(lambdas, counts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _failure_code(reports) -> int:
    if all(r.status in _DATA_STATUSES for r in reports):
        return EXIT_DATA
    return EXIT_SOLVER


def cmd_fit(args) -> int:
    grid = _grid(args)
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    x, y = load_csv(args.input)
    lo, hi = check_range(args.x_range, x)
    try:
        best, reports = select_model(x, y, grid, (lo, hi), args.model, args.tol, args.jobs)
    except SelectionError as exc:
        print(f"nnpspline: {exc}", file=sys.stderr)
        failures = sorted({r.status for r in exc.reports})
        if failures:
            print(f"nnpspline: statuses: {', '.join(failures)}", file=sys.stderr)
        return _failure_code(exc.reports)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="") as fh:
            write_report(reports, fh)
    low = min_on_grid(best.model, AUDIT_POINTS)
    if low < AUDIT_TOL:
        print(f"nnpspline: nonnegativity audit failed: minimum {low:.3g}", file=sys.stderr)
        return EXIT_SOLVER
    if args.dump_program:
        knots = make_uniform_knots(lo, hi, best.n_interior)
        prog, _ = build_model(FitProblem(x, y, knots, best.lam), args.model)
        with open(args.dump_program, "w", encoding="utf-8", newline="") as fh:
            dump_program(prog, fh)
    mf = ModelFile(
        knots=best.model.knots.knots,
        alpha=best.model.alpha,
        lam=best.lam,
        n_interior=best.n_interior,
        x_range=(lo, hi),
        selection={
            "asr": best.asr,
            "trace_s": best.trace_s,
            "gcv": best.gcv,
            "aic": best.aic,
            "status": best.status,
            "polished": "unpolished" not in best.flags,
            "min_on_grid": low,
        },
        provenance={
            "input": str(args.input),
            "grid": {"lambdas": list(grid.lambda_values), "knot_counts": list(grid.interior_knot_counts)},
            "model": args.model,
            "tol": args.tol,
            "created": build_timestamp(),
        },
    )
    mf.save(args.output)
    print(
        f"winner n_interior={best.n_interior} lambda={format_number(best.lam)} "
        f"gcv={format_number(best.gcv)} aic={format_number(best.aic)}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    spline = ModelFile.load(args.model).spline()
    if args.at is not None:
        value = eval_spline(spline, np.array([args.at]))[0]
        text = format_number(value) + "\n"
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    lo, hi = spline.knots.base_interval
    xs = np.linspace(lo, hi, args.points)
    save_csv(args.output or sys.stdout, xs, eval_spline(spline, xs))
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be nonnegative")
    lo, hi = args.range
    try:
        spec = GeneratorSpec.on_range(args.family, lo, hi, args.count, params=args.params, noise=args.noise, seed=args.seed)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    x, y = generate(spec)
    save_csv(args.output or sys.stdout, x, y)
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "eval": cmd_eval, "gen": cmd_gen}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, DegenerateIntervalError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error ({exc.status}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SystemExit as exc:
        # --help exits through argparse
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

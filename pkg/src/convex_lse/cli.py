"""Command line front end: fit, predict, simulate.

Exit codes are stable: 0 success, 1 usage, 2 I/O or data parsing,
3 iteration limit reached (the model file is still written), 4 dimension
mismatch between a model and query points. Stdout is machine-parseable
key=value lines.

The --variant flag value "monotone" selects the componentwise
NONINCREASING constraint (subgradients in the nonpositive orthant).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import io as model_io
from .core import FitConfig, SolveStatus, Variant
from .envelope import evaluate, max_affine_extension
from .errors import (
    ConvexLSEError,
    DimensionMismatchError,
    EmptyDataError,
    MissingColumnError,
    NonFiniteError,
    ParseError,
    SchemaMismatchError,
    ShapeMismatchError,
    VersionUnsupportedError,
)
from .qp import fit
from .sim import (
    DesignKind,
    hyperplane_truth,
    quadratic_truth,
    run_experiment,
    write_report_csv,
    write_report_json,
)

_DATA_ERRORS = (
    OSError,
    ParseError,
    MissingColumnError,
    SchemaMismatchError,
    VersionUnsupportedError,
    NonFiniteError,
    ShapeMismatchError,
    EmptyDataError,
)

_VARIANTS = {
    "convex": Variant.CONVEX,
    "monotone": Variant.CONVEX_NONINCREASING,
}

_DESIGNS = {
    "grid": DesignKind.FIXED_GRID,
    "iid": DesignKind.IID_UNIFORM,
    "hetero": DesignKind.HETEROSCEDASTIC_FIXED,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we promise 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="convex-lse",
        description="Least squares fitting of a multivariate convex regression function.",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_fit = commands.add_parser("fit", help="fit a model from a CSV dataset")
    p_fit.add_argument("--input", required=True, help="dataset CSV with header row")
    p_fit.add_argument("--response", required=True, help="name of the response column")
    p_fit.add_argument("--variant", choices=sorted(_VARIANTS), default="convex")
    p_fit.add_argument("--out", required=True, help="output model JSON path")
    p_fit.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
    p_fit.add_argument("--max-iter", type=int, default=200_000)
    p_fit.add_argument("--no-scale", action="store_true", help="skip data standardization")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = commands.add_parser("predict", help="evaluate a fitted model at points")
    p_pred.add_argument("--model", required=True, help="model JSON from fit")
    p_pred.add_argument("--points", required=True, help="CSV of query points")
    p_pred.add_argument("--out", required=True, help="output CSV path")
    p_pred.add_argument(
        "--extension",
        choices=["envelope", "maxaffine"],
        default="envelope",
        help="envelope: +inf outside the domain; maxaffine: finite everywhere",
    )
    p_pred.add_argument(
        "--subgradients",
        action="store_true",
        help="append subgradient columns xi_1..xi_d and intercept eta",
    )
    p_pred.set_defaults(func=cmd_predict)

    p_sim = commands.add_parser("simulate", help="run a consistency experiment sweep")
    p_sim.add_argument("--scenario", choices=["quadratic", "hyperplane"], required=True)
    p_sim.add_argument("--d", type=int, default=2)
    p_sim.add_argument("--n", required=True, help="comma-separated sample sizes")
    p_sim.add_argument("--reps", type=int, default=10)
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--design", choices=sorted(_DESIGNS), default="iid")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--variant", choices=sorted(_VARIANTS), default="convex")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def cmd_fit(args) -> int:
    dataset = model_io.read_csv(args.input, args.response)
    config = FitConfig(
        feas_tol=args.tol,
        stat_tol=args.tol,
        max_iter=args.max_iter,
        scaling=not args.no_scale,
    )
    model = fit(dataset, _VARIANTS[args.variant], config)
    model_io.write_model(model, args.out)
    diag = model.diagnostics
    print(
        f"status={diag.status.value} iterations={diag.iterations} "
        f"objective={diag.objective} primal_residual={diag.primal_residual} "
        f"stationarity_residual={diag.stationarity_residual} out={args.out}"
    )
    return 0 if diag.status is SolveStatus.CONVERGED else 3


def cmd_predict(args) -> int:
    model = model_io.read_model(args.model)
    points, _ = model_io.read_points_csv(args.points)
    if points.shape[1] != model.d:
        raise DimensionMismatchError(
            f"query points have dimension {points.shape[1]}, model expects {model.d}"
        )

    header = ["value", "in_domain"]
    if args.subgradients:
        header += [f"xi_{i + 1}" for i in range(model.d)] + ["eta"]

    rows = []
    for x in points:
        result = evaluate(model, x)
        if args.extension == "maxaffine":
            value = max_affine_extension(model, x)
            pieces = model.subgradients @ x + (
                model.fitted - (model.subgradients * model.points).sum(axis=1)
            )
            best = int(pieces.argmax())
            xi = model.subgradients[best]
            eta = value - float(xi @ x)
            row = [str(value), "true" if result.in_domain else "false"]
            if args.subgradients:
                row += [str(float(v)) for v in xi] + [str(eta)]
        else:
            if result.in_domain:
                row = [str(result.value), "true"]
                if args.subgradients:
                    row += [str(float(v)) for v in result.subgradient]
                    row += [str(result.intercept)]
            else:
                row = ["inf", "false"]
                if args.subgradients:
                    row += [""] * (model.d + 1)
        rows.append(row)

    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"points={len(rows)} out={args.out}")
    return 0


def _alternating_slope(d: int):
    # matches the d=2 hyperplane example truth -x1 + x2
    return [(-1.0) ** (i + 1) for i in range(1, d + 1)]


def cmd_simulate(args) -> int:
    try:
        n_values = [int(part) for part in args.n.split(",") if part.strip()]
    except ValueError:
        print(f"error: --n expects comma-separated integers, got {args.n!r}", file=sys.stderr)
        return 1
    if not n_values or args.reps < 1 or args.d < 1 or args.sigma < 0:
        print("error: need n >= 1, reps >= 1, d >= 1, sigma >= 0", file=sys.stderr)
        return 1

    if args.scenario == "quadratic":
        truth = quadratic_truth()
    else:
        truth = hyperplane_truth(_alternating_slope(args.d), 0.0)

    report = run_experiment(
        truth=truth,
        design=_DESIGNS[args.design],
        d=args.d,
        n_values=n_values,
        replications=args.reps,
        noise_sigma=args.sigma,
        master_seed=args.seed,
        variant=_VARIANTS[args.variant],
    )

    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, "report.json")
    csv_path = os.path.join(args.out, "cells.csv")
    write_report_json(report, json_path)
    write_report_csv(report, csv_path)

    for agg in report.aggregates:
        mean_sup = agg["mean_sup_error"]
        mean_grad = agg["mean_grad_error"]
        print(
            f"n={agg['n']} mean_sup_error={mean_sup} mean_grad_error={mean_grad} "
            f"failures={agg['failures']}"
        )
    print(f"report={json_path} cells={csv_path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvexLSEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

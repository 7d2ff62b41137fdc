"""Least squares estimation of a multivariate convex regression function.

Fit the shape-restricted least squares estimator (optionally
componentwise nonincreasing), evaluate the fitted piecewise-linear
function anywhere via its lower convex envelope, extract subgradients,
and run seeded consistency experiments.
"""

from .cone import ConstraintSystem, build_constraints
from .core import (
    Dataset,
    EvalResult,
    FitConfig,
    FitModel,
    ScaleTransform,
    SolveDiagnostics,
    SolveStatus,
    Variant,
    standardize,
    validate,
)
from .envelope import (
    EnvelopeSolution,
    evaluate,
    lower_envelope,
    max_affine_extension,
    subgradient,
)
from .errors import (
    CapacityExceededError,
    ConvexLSEError,
    DimensionMismatchError,
    EmptyDataError,
    EmptyGridError,
    MissingColumnError,
    NoConvergenceError,
    NonFiniteError,
    NumericalBreakdownError,
    OutsideDomainError,
    ParseError,
    SchemaMismatchError,
    ShapeMismatchError,
    VersionUnsupportedError,
)
from .io import read_csv, read_model, read_points_csv, write_csv, write_model
from .oracle import Halfspace, MaxAffine, d1_cone, dykstra_project, random_max_affine
from .qp import KKTReport, fit, kkt_check, project
from .sim import (
    CellResult,
    DesignKind,
    ExperimentReport,
    Scenario,
    Truth,
    generate,
    grad_error,
    hyperplane_truth,
    interior_grid,
    max_affine_truth,
    quadratic_truth,
    run_experiment,
    sup_error,
    write_report_csv,
    write_report_json,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityExceededError",
    "CellResult",
    "ConstraintSystem",
    "ConvexLSEError",
    "Dataset",
    "DesignKind",
    "DimensionMismatchError",
    "EmptyDataError",
    "EmptyGridError",
    "EnvelopeSolution",
    "EvalResult",
    "ExperimentReport",
    "FitConfig",
    "FitModel",
    "Halfspace",
    "KKTReport",
    "MaxAffine",
    "MissingColumnError",
    "NoConvergenceError",
    "NonFiniteError",
    "NumericalBreakdownError",
    "OutsideDomainError",
    "ParseError",
    "ScaleTransform",
    "Scenario",
    "SchemaMismatchError",
    "ShapeMismatchError",
    "SolveDiagnostics",
    "SolveStatus",
    "Truth",
    "Variant",
    "VersionUnsupportedError",
    "build_constraints",
    "d1_cone",
    "dykstra_project",
    "evaluate",
    "fit",
    "generate",
    "grad_error",
    "hyperplane_truth",
    "interior_grid",
    "kkt_check",
    "lower_envelope",
    "max_affine_extension",
    "max_affine_truth",
    "project",
    "quadratic_truth",
    "random_max_affine",
    "read_csv",
    "read_model",
    "read_points_csv",
    "run_experiment",
    "standardize",
    "subgradient",
    "sup_error",
    "validate",
    "write_csv",
    "write_model",
    "write_report_csv",
    "write_report_json",
]

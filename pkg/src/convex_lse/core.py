"""Domain types shared by all modules: datasets, configuration, fitted models.

All types here are immutable after construction (arrays are marked read-only)
and safe to share across concurrent readers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDataError,
    NonFiniteError,
    ShapeMismatchError,
)


class Variant(enum.Enum):
    """Shape constraint imposed on the regression function.

    CONVEX fits an unrestricted convex function; CONVEX_NONINCREASING
    additionally requires the function to be nonincreasing in every
    coordinate (all subgradients in the nonpositive orthant).
    """

    CONVEX = "convex"
    CONVEX_NONINCREASING = "convex_nonincreasing"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """A regression sample: n design points in R^d paired with n responses.

    Duplicate design points are permitted and preserved; the pairwise
    constraints force their fitted values to coincide without any
    special-casing.

    Use :func:`validate` to construct one from raw input.
    """

    points: np.ndarray
    responses: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def validate(raw_points, raw_responses) -> Dataset:
    """Check raw arrays and build a :class:`Dataset`.

    Parameters
    ----------
    raw_points : array-like, shape (n, d) or (n,)
        Design points; a 1-d array is treated as n points in R^1.
    raw_responses : array-like, shape (n,)
        Observed responses.

    Raises
    ------
    ShapeMismatchError
        If the input is not rectangular, row counts differ, or d = 0.
    EmptyDataError
        If n = 0.
    NonFiniteError
        If any entry is NaN or infinite.
    """
    try:
        points = np.asarray(raw_points, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ShapeMismatchError(f"points are not a rectangular numeric array: {exc}")
    try:
        responses = np.asarray(raw_responses, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ShapeMismatchError(f"responses are not a numeric vector: {exc}")

    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2:
        raise ShapeMismatchError(f"points must be 2-d, got ndim={points.ndim}")
    if responses.ndim != 1:
        raise ShapeMismatchError(f"responses must be 1-d, got ndim={responses.ndim}")
    if points.shape[0] == 0:
        raise EmptyDataError("dataset has no observations")
    if points.shape[1] == 0:
        raise ShapeMismatchError("design points must have dimension d >= 1")
    if points.shape[0] != responses.shape[0]:
        raise ShapeMismatchError(
            f"{points.shape[0]} points but {responses.shape[0]} responses"
        )
    if not np.isfinite(points).all():
        raise NonFiniteError("points contain a NaN or infinite entry")
    if not np.isfinite(responses).all():
        raise NonFiniteError("responses contain a NaN or infinite entry")

    return Dataset(points=_readonly(points), responses=_readonly(responses))


@dataclass(frozen=True)
class ScaleTransform:
    """Invertible affine map applied to a dataset before solving.

    Each coordinate i is mapped to (x_i - x_offset_i) / x_scale_i; responses
    are shifted by -y_offset. Coordinates with zero spread are flagged
    degenerate and mapped to zero (offset = the constant value, scale = 1).
    """

    x_offset: np.ndarray
    x_scale: np.ndarray
    y_offset: float
    degenerate: np.ndarray  # bool mask, True where a coordinate had no spread

    @staticmethod
    def identity(d: int) -> "ScaleTransform":
        return ScaleTransform(
            x_offset=_readonly(np.zeros(d)),
            x_scale=_readonly(np.ones(d)),
            y_offset=0.0,
            degenerate=np.zeros(d, dtype=bool),
        )

    @property
    def is_identity(self) -> bool:
        return (
            self.y_offset == 0.0
            and not self.x_offset.any()
            and (self.x_scale == 1.0).all()
        )

    def apply_points(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_offset) / self.x_scale

    def invert_points(self, x: np.ndarray) -> np.ndarray:
        return x * self.x_scale + self.x_offset

    def apply_responses(self, y: np.ndarray) -> np.ndarray:
        return y - self.y_offset

    def invert_responses(self, y: np.ndarray) -> np.ndarray:
        return y + self.y_offset

    def invert_subgradients(self, xi: np.ndarray) -> np.ndarray:
        # chain rule: d/dx phi((x - c)/s) = xi_scaled / s
        return xi / self.x_scale


def standardize(dataset: Dataset) -> tuple[Dataset, ScaleTransform]:
    """Affinely map each coordinate to zero mean and unit max-abs.

    Responses are centered. The transform is recorded and invertible;
    zero-spread coordinates are mapped to zero and flagged. The estimator
    itself is not scale-dependent; this is purely a conditioning aid for
    the constraint matrix.
    """
    x = dataset.points
    offset = x.mean(axis=0)
    centered = x - offset
    scale = np.abs(centered).max(axis=0)
    degenerate = scale == 0.0
    scale = np.where(degenerate, 1.0, scale)
    y_offset = float(dataset.responses.mean())

    transform = ScaleTransform(
        x_offset=_readonly(offset),
        x_scale=_readonly(scale),
        y_offset=y_offset,
        degenerate=degenerate,
    )
    scaled = Dataset(
        points=_readonly(transform.apply_points(x)),
        responses=_readonly(transform.apply_responses(dataset.responses)),
    )
    return scaled, transform


@dataclass(frozen=True)
class FitConfig:
    """Solver configuration. Fitting is deterministic: no seeds involved.

    feas_tol and stat_tol are relative tolerances; the solver stops when
    both residuals fall below tol * (1 + max|Y|). The remaining fields
    expose the operator-splitting internals with sensible defaults.
    """

    feas_tol: float = 1e-8
    stat_tol: float = 1e-8
    max_iter: int = 200_000
    scaling: bool = True
    # operator-splitting internals
    sigma: float = 1e-6  # proximal regularization; perturbs the xi selection only
    over_relaxation: float = 1.6
    rho: float = 0.1  # initial penalty, adapted by residual balancing
    adaptive_rho: bool = True
    check_every: int = 25
    polish: bool = True
    memory_budget: int = 2 << 30  # bytes of sparse constraint storage

    def __post_init__(self) -> None:
        if not (self.feas_tol > 0 and self.stat_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0 < self.over_relaxation < 2):
            raise ValueError("over_relaxation must lie in (0, 2)")
        if self.rho <= 0 or self.sigma <= 0:
            raise ValueError("rho and sigma must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True)
class SolveDiagnostics:
    """Solver outcome: residuals, objective, iteration count.

    CONVERGED guarantees primal_residual <= feas_tol * (1 + max|Y|) and
    stationarity_residual <= stat_tol * (1 + max|Y|) on the solve scale.
    objective_trace records the best objective seen at each checkpoint
    (nonincreasing by construction).
    """

    status: SolveStatus
    iterations: int
    primal_residual: float
    stationarity_residual: float
    objective: float
    polished: bool = False
    rho_final: float = float("nan")
    objective_trace: tuple[float, ...] = field(default_factory=tuple, repr=False)

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "stationarity_residual": self.stationarity_residual,
            "objective": self.objective,
            "polished": self.polished,
            "rho_final": self.rho_final,
        }


@dataclass(frozen=True)
class FitModel:
    """A fitted convex (or convex nonincreasing) least squares model.

    Holds the design points, the fitted value at each of them, one feasible
    subgradient per point, and solver diagnostics, all on the original data
    scale. Immutable after fit. The fitted vector is the projection of the
    responses onto the cone of shape-constrained evaluations; subgradients
    are feasible but solver-dependent (the optimum is unique in the fitted
    values only).
    """

    variant: Variant
    points: np.ndarray
    fitted: np.ndarray
    subgradients: np.ndarray
    diagnostics: SolveDiagnostics
    scale_transform: ScaleTransform

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class EvalResult:
    """Outcome of evaluating the fitted estimator at one query point.

    value is +inf exactly when the point lies outside the effective domain
    (in_domain False). For in-domain points, weights holds the barycentric
    weights of the active vertices as (indices, values), and subgradient /
    intercept give a supporting hyperplane from the dual solution.
    """

    value: float
    in_domain: bool
    subgradient: np.ndarray | None = None
    intercept: float | None = None
    weight_indices: np.ndarray | None = None
    weight_values: np.ndarray | None = None

    def __post_init__(self) -> None:
        assert self.in_domain == math.isfinite(self.value)

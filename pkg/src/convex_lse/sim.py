"""Synthetic experiments probing consistency of the fitted estimator.

Data generators cover three regimes: a deterministic grid design, an
i.i.d. uniform design, and a grid design with input-dependent noise
variance. Error metrics compare the fitted function (and its
subgradients) to the generating truth on a compact grid inside the
domain interior, where uniform convergence is expected to show up;
boundary effects are real and deliberately excluded.

Replication seeds are derived from a master seed with a counter through
SeedSequence, so a sweep is reproducible cell by cell regardless of
execution order or worker count.
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, FitConfig, FitModel, Variant, validate
from .envelope import evaluate, subgradient
from .errors import ConvexLSEError, EmptyGridError
from .oracle import MaxAffine
from .qp import fit


class TruthKind(enum.Enum):
    QUADRATIC = "quadratic"
    HYPERPLANE = "hyperplane"
    MAX_AFFINE = "max_affine"


@dataclass(frozen=True)
class Truth:
    """A regression truth: squared norm, a hyperplane, or a max-affine
    function supplied by the caller. Callable on point batches."""

    kind: TruthKind
    slope: np.ndarray | None = None  # hyperplane <slope, x> + offset
    offset: float = 0.0
    pieces: MaxAffine | None = None

    def __call__(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind is TruthKind.QUADRATIC:
            return np.einsum("ij,ij->i", x, x)
        if self.kind is TruthKind.HYPERPLANE:
            return x @ self.slope + self.offset
        return np.asarray(self.pieces(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is TruthKind.QUADRATIC:
            return 2.0 * x
        if self.kind is TruthKind.HYPERPLANE:
            return self.slope.copy()
        return self.pieces.subgradient(x)

    def describe(self) -> dict:
        if self.kind is TruthKind.QUADRATIC:
            return {"kind": self.kind.value}
        if self.kind is TruthKind.HYPERPLANE:
            return {
                "kind": self.kind.value,
                "slope": self.slope.tolist(),
                "offset": self.offset,
            }
        return {
            "kind": self.kind.value,
            "slopes": self.pieces.slopes.tolist(),
            "intercepts": self.pieces.intercepts.tolist(),
        }


def quadratic_truth() -> Truth:
    return Truth(kind=TruthKind.QUADRATIC)


def hyperplane_truth(slope, offset: float = 0.0) -> Truth:
    slope = np.asarray(slope, dtype=np.float64)
    slope.flags.writeable = False
    return Truth(kind=TruthKind.HYPERPLANE, slope=slope, offset=float(offset))


def max_affine_truth(pieces: MaxAffine) -> Truth:
    return Truth(kind=TruthKind.MAX_AFFINE, pieces=pieces)


class DesignKind(enum.Enum):
    FIXED_GRID = "fixed_grid"
    IID_UNIFORM = "iid_uniform"
    HETEROSCEDASTIC_FIXED = "heteroscedastic_fixed"


@dataclass(frozen=True)
class Scenario:
    """One data-generating configuration, deterministic given its seed."""

    truth: Truth
    design: DesignKind
    d: int
    n: int
    noise_sigma: float
    seed: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _fixed_grid(n: int, d: int) -> np.ndarray:
    """First n points, in lexicographic order, of the smallest per-axis
    grid on [-1, 1]^d with at least n points."""
    per_axis = max(1, math.ceil(n ** (1.0 / d)))
    while per_axis**d < n:
        per_axis += 1
    axis = np.linspace(-1.0, 1.0, per_axis) if per_axis > 1 else np.array([-1.0])
    points = np.array(list(itertools.islice(itertools.product(axis, repeat=d), n)))
    return points.reshape(n, d)


def generate(scenario: Scenario) -> tuple[Dataset, Truth]:
    """Draw one dataset from a scenario; the truth handle rides along.

    Draw order is fixed (design points first, then one standard normal
    per observation) so results are stable under refactoring. The
    heteroscedastic design scales the noise by sigma(x) with
    sigma^2(x) = noise_sigma^2 (1 + |x|^2) / 2, bounded on the domain and
    bounded away from zero.
    """
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    n, d = scenario.n, scenario.d

    if scenario.design is DesignKind.IID_UNIFORM:
        points = rng.uniform(-1.0, 1.0, size=(n, d))
    else:
        points = _fixed_grid(n, d)

    noise = rng.standard_normal(n)
    if scenario.design is DesignKind.HETEROSCEDASTIC_FIXED:
        profile = np.sqrt((1.0 + np.einsum("ij,ij->i", points, points)) / 2.0)
        eps = scenario.noise_sigma * profile * noise
    else:
        eps = scenario.noise_sigma * noise

    responses = scenario.truth(points) + eps
    return validate(points, responses), scenario.truth


def interior_grid(d: int, half_width: float = 0.5, per_axis: int = 11) -> np.ndarray:
    """Evaluation grid on [-half_width, half_width]^d, per_axis points per
    coordinate: the default compact interior set for the error metrics."""
    axis = np.linspace(-half_width, half_width, per_axis)
    return np.array(list(itertools.product(axis, repeat=d))).reshape(-1, d)


def sup_error(model: FitModel, truth, grid: np.ndarray) -> tuple[float, int]:
    """Largest |fitted(x) - truth(x)| over the grid points inside the
    domain; out-of-domain points are dropped and counted.

    Returns (sup_error, dropped). Raises EmptyGrid when every grid point
    falls outside the domain.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    truth_values = np.asarray(truth(grid), dtype=np.float64)
    worst = -math.inf
    dropped = 0
    for x, target in zip(grid, truth_values):
        result = evaluate(model, x)
        if not result.in_domain:
            dropped += 1
            continue
        worst = max(worst, abs(result.value - float(target)))
    if dropped == grid.shape[0]:
        raise EmptyGridError("every grid point lies outside the fitted domain")
    return worst, dropped


def grad_error(model: FitModel, truth_gradient, grid: np.ndarray) -> tuple[float, int]:
    """Largest Euclidean distance between a fitted subgradient and the
    truth gradient over in-domain grid points; same dropping rules as
    sup_error."""
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    worst = -math.inf
    dropped = 0
    for x in grid:
        result = evaluate(model, x)
        if not result.in_domain:
            dropped += 1
            continue
        target = np.asarray(truth_gradient(x), dtype=np.float64)
        worst = max(worst, float(np.linalg.norm(result.subgradient - target)))
    if dropped == grid.shape[0]:
        raise EmptyGridError("every grid point lies outside the fitted domain")
    return worst, dropped


@dataclass(frozen=True)
class CellResult:
    """One (n, replication) cell of a sweep."""

    n: int
    replication: int
    seed: int
    status: str  # solver status, or "error" when the fit raised
    sup_error: float | None
    sup_dropped: int | None
    grad_error: float | None
    grad_dropped: int | None
    iterations: int | None
    objective: float | None
    seconds: float
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "replication": self.replication,
            "seed": self.seed,
            "status": self.status,
            "sup_error": self.sup_error,
            "sup_dropped": self.sup_dropped,
            "grad_error": self.grad_error,
            "grad_dropped": self.grad_dropped,
            "iterations": self.iterations,
            "objective": self.objective,
            "seconds": self.seconds,
            "error": self.error,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Full record of a sweep: configuration, per-cell results, and
    per-n aggregates. Deterministic given the master seed except for the
    wall-time fields ("seconds", "total_seconds")."""

    truth: dict
    design: str
    variant: str
    d: int
    n_values: tuple[int, ...]
    replications: int
    noise_sigma: float
    master_seed: int
    grid_half_width: float
    grid_per_axis: int
    cells: tuple[CellResult, ...]
    aggregates: tuple[dict, ...]
    total_seconds: float

    def as_dict(self) -> dict:
        return {
            "truth": self.truth,
            "design": self.design,
            "variant": self.variant,
            "d": self.d,
            "n_values": list(self.n_values),
            "replications": self.replications,
            "noise_sigma": self.noise_sigma,
            "master_seed": self.master_seed,
            "grid_half_width": self.grid_half_width,
            "grid_per_axis": self.grid_per_axis,
            "cells": [c.as_dict() for c in self.cells],
            "aggregates": list(self.aggregates),
            "total_seconds": self.total_seconds,
        }

    def mean_sup_error(self, n: int) -> float:
        for agg in self.aggregates:
            if agg["n"] == n:
                return agg["mean_sup_error"]
        raise KeyError(f"no aggregate for n={n}")

    def mean_grad_error(self, n: int) -> float:
        for agg in self.aggregates:
            if agg["n"] == n:
                return agg["mean_grad_error"]
        raise KeyError(f"no aggregate for n={n}")


def _cell_seed(master_seed: int, counter: int) -> int:
    seq = np.random.SeedSequence((master_seed, counter))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _run_cell(
    truth: Truth,
    design: DesignKind,
    d: int,
    n: int,
    replication: int,
    noise_sigma: float,
    seed: int,
    variant: Variant,
    config: FitConfig,
    grid: np.ndarray,
) -> CellResult:
    start = time.perf_counter()
    try:
        scenario = Scenario(
            truth=truth, design=design, d=d, n=n, noise_sigma=noise_sigma, seed=seed
        )
        dataset, truth_fn = generate(scenario)
        model = fit(dataset, variant, config)
        sup, sup_dropped = sup_error(model, truth_fn, grid)
        grad, grad_dropped = grad_error(model, truth_fn.gradient, grid)
        return CellResult(
            n=n,
            replication=replication,
            seed=seed,
            status=model.diagnostics.status.value,
            sup_error=sup,
            sup_dropped=sup_dropped,
            grad_error=grad,
            grad_dropped=grad_dropped,
            iterations=model.diagnostics.iterations,
            objective=model.diagnostics.objective,
            seconds=time.perf_counter() - start,
        )
    except ConvexLSEError as exc:
        return CellResult(
            n=n,
            replication=replication,
            seed=seed,
            status="error",
            sup_error=None,
            sup_dropped=None,
            grad_error=None,
            grad_dropped=None,
            iterations=None,
            objective=None,
            seconds=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )


def default_workers() -> int:
    """Worker count for sweeps: the CONVEX_LSE_THREADS environment
    variable when set, else 1 (sequential)."""
    raw = os.environ.get("CONVEX_LSE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(
    truth: Truth,
    design: DesignKind,
    d: int,
    n_values,
    replications: int,
    noise_sigma: float,
    master_seed: int,
    variant: Variant = Variant.CONVEX,
    config: FitConfig | None = None,
    grid_half_width: float = 0.5,
    grid_per_axis: int = 11,
    workers: int | None = None,
) -> ExperimentReport:
    """Sweep sample sizes with replications and collect error metrics.

    Per-cell seeds come from SeedSequence((master_seed, counter)) with
    the counter enumerating (n, replication) cells in order, so any cell
    can be reproduced in isolation. Cells run in a thread pool when
    workers > 1; results are identical either way. A fit failure is
    recorded in its cell and the sweep continues.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    n_values = tuple(int(n) for n in n_values)
    if config is None:
        config = FitConfig()
    if workers is None:
        workers = default_workers()
    grid = interior_grid(d, half_width=grid_half_width, per_axis=grid_per_axis)

    jobs = []
    counter = 0
    for n in n_values:
        for rep in range(replications):
            jobs.append((n, rep, _cell_seed(master_seed, counter)))
            counter += 1

    start = time.perf_counter()

    def run(job):
        n, rep, seed = job
        return _run_cell(
            truth, design, d, n, rep, noise_sigma, seed, variant, config, grid
        )

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run, jobs))
    else:
        cells = [run(job) for job in jobs]

    aggregates = []
    for n in n_values:
        ok = [c for c in cells if c.n == n and c.error is None]
        failures = sum(1 for c in cells if c.n == n and c.error is not None)
        aggregates.append(
            {
                "n": n,
                "replications": replications,
                "failures": failures,
                "mean_sup_error": (
                    float(np.mean([c.sup_error for c in ok])) if ok else None
                ),
                "max_sup_error": (
                    float(np.max([c.sup_error for c in ok])) if ok else None
                ),
                "mean_grad_error": (
                    float(np.mean([c.grad_error for c in ok])) if ok else None
                ),
                "max_grad_error": (
                    float(np.max([c.grad_error for c in ok])) if ok else None
                ),
            }
        )

    return ExperimentReport(
        truth=truth.describe(),
        design=design.value,
        variant=variant.value,
        d=d,
        n_values=n_values,
        replications=replications,
        noise_sigma=noise_sigma,
        master_seed=master_seed,
        grid_half_width=grid_half_width,
        grid_per_axis=grid_per_axis,
        cells=tuple(cells),
        aggregates=tuple(aggregates),
        total_seconds=time.perf_counter() - start,
    )


def write_report_json(report: ExperimentReport, path) -> None:
    with open(path, "w") as handle:
        json.dump(report.as_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_report_csv(report: ExperimentReport, path) -> None:
    """Flat per-cell table for external plotting."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["n", "replication", "seed", "status", "sup_error", "grad_error", "seconds"]
        )
        for c in report.cells:
            writer.writerow(
                [c.n, c.replication, c.seed, c.status, c.sup_error, c.grad_error, c.seconds]
            )

"""Independent cross-checks: a univariate cone description, a cyclic
projection method, and random piecewise-affine convex witnesses.

Nothing here shares code with the operator-splitting solver; that is the
point. The univariate halfspace description plus Dykstra's method give a
second route to the same projection, and max-affine functions give
feasible points of the cone against which projection inequalities can be
tested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Variant
from .errors import NoConvergenceError, ShapeMismatchError


@dataclass(frozen=True)
class Halfspace:
    """Sparse row a with {z : <a, z> <= 0}; only entries at idx are nonzero."""

    idx: np.ndarray
    vals: np.ndarray

    @property
    def norm_sq(self) -> float:
        return float(self.vals @ self.vals)


def d1_cone(points, variant: Variant = Variant.CONVEX) -> list[Halfspace]:
    """Halfspace description of the univariate shape-restricted cone.

    For sorted distinct abscissae u_0 < u_1 < ... the cone of convex
    evaluations is cut out by the divided-difference rows

        (z_{i+1} - z_i) / (u_{i+1} - u_i)
            - (z_{i+2} - z_{i+1}) / (u_{i+2} - u_{i+1}) <= 0,

    one per consecutive triple. Duplicate abscissae contribute opposing
    halfspace pairs that pin their values together, and the nonincreasing
    variant adds z_{i+1} - z_i <= 0 per consecutive distinct pair. Rows
    reference positions in the input order, so the output applies directly
    to unsorted data.
    """
    x = np.asarray(points, dtype=np.float64).ravel()
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]

    # group duplicates: reps[g] is the input index representing group g
    group_starts = np.flatnonzero(np.concatenate([[True], np.diff(xs) > 0]))
    reps = order[group_starts]
    u = xs[group_starts]
    m = u.shape[0]

    rows: list[Halfspace] = []

    for g, start in enumerate(group_starts):
        end = group_starts[g + 1] if g + 1 < m else n
        for pos in range(start + 1, end):
            j, r = order[pos], reps[g]
            a = np.array([1.0, -1.0])
            ij = np.array([j, r])
            rows.append(Halfspace(idx=ij, vals=a))
            rows.append(Halfspace(idx=ij, vals=-a))

    for i in range(m - 2):
        d0 = u[i + 1] - u[i]
        d1 = u[i + 2] - u[i + 1]
        rows.append(
            Halfspace(
                idx=np.array([reps[i], reps[i + 1], reps[i + 2]]),
                vals=np.array([-1.0 / d0, 1.0 / d0 + 1.0 / d1, -1.0 / d1]),
            )
        )

    if variant is Variant.CONVEX_NONINCREASING:
        for i in range(m - 1):
            rows.append(
                Halfspace(
                    idx=np.array([reps[i], reps[i + 1]]),
                    vals=np.array([-1.0, 1.0]),
                )
            )

    return rows


def dykstra_project(
    halfspaces: list[Halfspace],
    y,
    tol: float = 1e-9,
    max_cycles: int = 1_000_000,
) -> np.ndarray:
    """Euclidean projection of y onto an intersection of halfspaces.

    Dykstra's corrected cyclic projections. For a halfspace the correction
    stays parallel to its normal, so one scalar per constraint suffices.
    Stops when no coordinate moves more than tol over a full cycle.

    Raises NoConvergenceError if max_cycles full cycles do not reach tol.
    """
    z = np.array(y, dtype=np.float64).copy()
    if z.ndim != 1:
        raise ShapeMismatchError("dykstra_project expects a flat vector")
    if not halfspaces:
        return z

    corrections = np.zeros(len(halfspaces))
    norms = np.array([h.norm_sq for h in halfspaces])
    if (norms == 0).any():
        raise ShapeMismatchError("halfspace with zero normal")

    for _ in range(max_cycles):
        delta = 0.0
        for i, h in enumerate(halfspaces):
            zi = z[h.idx]
            t = float(h.vals @ zi) + corrections[i] * norms[i]
            step = max(0.0, t) / norms[i]
            znew = zi + (corrections[i] - step) * h.vals
            delta = max(delta, float(np.abs(znew - zi).max()))
            z[h.idx] = znew
            corrections[i] = step
        if delta <= tol:
            return z

    raise NoConvergenceError(
        f"cyclic projection did not settle below {tol} in {max_cycles} cycles"
    )


@dataclass(frozen=True)
class MaxAffine:
    """Pointwise maximum of affine pieces: x -> max_i <slopes_i, x> + intercepts_i.

    Convex by construction; nonincreasing when every slope is nonpositive.
    Serves as a test witness and as a configurable simulation truth.
    """

    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def d(self) -> int:
        return self.slopes.shape[1]

    def __call__(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pieces = np.atleast_2d(x) @ self.slopes.T + self.intercepts
        values = pieces.max(axis=1)
        return float(values[0]) if single else values

    def subgradient(self, x) -> np.ndarray:
        """Slope of a maximizing piece; a valid subgradient everywhere."""
        x = np.asarray(x, dtype=np.float64)
        pieces = self.slopes @ x + self.intercepts
        return self.slopes[int(np.argmax(pieces))].copy()


def random_max_affine(
    seed,
    d: int,
    n_pieces: int = 5,
    coefficient_range: tuple[float, float] = (-1.0, 1.0),
    intercept_range: tuple[float, float] = (-1.0, 1.0),
) -> MaxAffine:
    """Draw a random max-affine function with uniform coefficients.

    seed may be an int or a numpy Generator. Passing a nonpositive
    coefficient_range (for example (-2.0, 0.0)) yields a nonincreasing
    witness suitable for the monotone variant.
    """
    if coefficient_range[0] > coefficient_range[1]:
        raise ValueError("coefficient_range must be (low, high) with low <= high")
    if intercept_range[0] > intercept_range[1]:
        raise ValueError("intercept_range must be (low, high) with low <= high")
    rng = np.random.default_rng(seed)
    slopes = rng.uniform(*coefficient_range, size=(n_pieces, d))
    intercepts = rng.uniform(*intercept_range, size=n_pieces)
    slopes.flags.writeable = False
    intercepts.flags.writeable = False
    return MaxAffine(slopes=slopes, intercepts=intercepts)

"""Pointwise evaluation of the fitted function by linear programming.

The fitted function at a query x is the smallest value Σ θ_k ẑ_k over
barycentric weights θ ≥ 0 with Σ θ_k X_k = x and Σ θ_k = 1 (the lower
convex envelope of the fitted points), with the convention that the
infimum over an empty set is +inf: queries outside the convex hull are
out of domain. The nonincreasing variant relaxes the matching constraint
to ϑ + Σ θ_k X_k = x with a nonnegative slack ϑ, extending the domain to
hull + R^d_+.

The d+1 equality multipliers (ξ, η) of the optimal basis describe a
supporting hyperplane <ξ, ·> + η of the fitted function, so ξ is a
subgradient at interior queries; for the nonincreasing variant the slack
columns force ξ ≤ 0.

Both phases use the revised simplex method with Bland's anti-cycling
rule: bases are (d+1)-square, so the per-pivot cost is dominated by
pricing, and determinism under degeneracy (queries on simplex faces are
common) matters more than pivot counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EvalResult, FitModel, Variant
from .errors import (
    DimensionMismatchError,
    NonFiniteError,
    NumericalBreakdownError,
    OutsideDomainError,
)

_PIVOT_TOL = 1e-12
_WEIGHT_FLOOR = 1e-12


@dataclass
class SimplexTableau:
    """Problem data plus the current basis for one equality-form LP.

    min <cost, w> over w >= 0 with rows @ w = rhs; basis lists the
    column index carried by each row. Mutated in place by pivoting.
    """

    rows: np.ndarray  # (m, n_cols)
    rhs: np.ndarray  # (m,)
    cost: np.ndarray  # (n_cols,)
    basis: np.ndarray  # (m,) int

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def basis_matrix(self) -> np.ndarray:
        return self.rows[:, self.basis]


def _solve_basis(tableau: SimplexTableau, rhs: np.ndarray, transpose: bool) -> np.ndarray:
    b = tableau.basis_matrix()
    try:
        return np.linalg.solve(b.T if transpose else b, rhs)
    except np.linalg.LinAlgError:
        raise NumericalBreakdownError("singular basis in simplex pivot")


def _bland_pivot(tableau: SimplexTableau, rc_tol: float, max_pivots: int) -> None:
    """Drive the tableau to optimality; Bland's rule on both choices."""
    for _ in range(max_pivots):
        pi = _solve_basis(tableau, tableau.cost[tableau.basis], transpose=True)
        reduced = tableau.cost - pi @ tableau.rows
        reduced[tableau.basis] = 0.0
        entering_set = np.flatnonzero(reduced < -rc_tol)
        if entering_set.size == 0:
            return
        j = int(entering_set[0])

        direction = _solve_basis(tableau, tableau.rows[:, j], transpose=False)
        values = _solve_basis(tableau, tableau.rhs, transpose=False)
        positive = np.flatnonzero(direction > _PIVOT_TOL)
        if positive.size == 0:
            raise NumericalBreakdownError(
                "unbounded descent in a bounded evaluation program"
            )
        ratios = values[positive] / direction[positive]
        best = ratios.min()
        ties = positive[ratios <= best + _PIVOT_TOL * (1.0 + abs(best))]
        leave = ties[np.argmin(tableau.basis[ties])]
        tableau.basis[int(leave)] = j
    raise NumericalBreakdownError(
        f"simplex did not terminate within {max_pivots} pivots"
    )


def _solve_equality_lp(
    rows: np.ndarray,
    rhs: np.ndarray,
    cost: np.ndarray,
    feas_tol: float,
) -> tuple[bool, float, np.ndarray, np.ndarray]:
    """Two-phase simplex for min <cost, w>, rows @ w = rhs, w >= 0.

    Returns (feasible, value, w, duals); duals are reported against the
    rows as given (sign flips used internally are undone, and rows found
    redundant in Phase 1 carry dual 0).
    """
    m, n_cols = rows.shape
    max_pivots = 1000 + 50 * (m + n_cols)
    rc_scale = 1.0 + float(np.abs(cost).max(initial=0.0))

    flip = np.where(rhs < 0, -1.0, 1.0)
    rows = rows * flip[:, None]
    rhs = rhs * flip

    # Phase 1: artificial identity basis, minimize the artificial mass.
    art = np.arange(n_cols, n_cols + m)
    tableau = SimplexTableau(
        rows=np.hstack([rows, np.eye(m)]),
        rhs=rhs,
        cost=np.concatenate([np.zeros(n_cols), np.ones(m)]),
        basis=art.copy(),
    )
    _bland_pivot(tableau, rc_tol=1e-10, max_pivots=max_pivots)
    values = _solve_basis(tableau, tableau.rhs, transpose=False)
    if float(tableau.cost[tableau.basis] @ values) > feas_tol:
        return False, math.inf, np.zeros(n_cols), np.zeros(m)

    # Pivot leftover artificials out; a row none of the structural
    # columns can stand in for is linearly dependent on the others and
    # is dropped (its dual is 0).
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if tableau.basis[r] < n_cols:
            continue
        e_r = np.zeros(m)
        e_r[r] = 1.0
        row_of_inverse = _solve_basis(tableau, e_r, transpose=True)
        weights = row_of_inverse @ rows
        weights[tableau.basis[tableau.basis < n_cols]] = 0.0
        candidates = np.flatnonzero(np.abs(weights) > 1e-9)
        if candidates.size:
            tableau.basis[r] = int(candidates[0])
        else:
            keep[r] = False

    kept_rows = rows[keep]
    tableau = SimplexTableau(
        rows=kept_rows,
        rhs=rhs[keep],
        cost=cost.copy(),
        basis=tableau.basis[keep],
    )
    if (tableau.basis >= n_cols).any():
        raise NumericalBreakdownError("artificial variable survived Phase 1")

    _bland_pivot(tableau, rc_tol=1e-10 * rc_scale, max_pivots=max_pivots)

    w = np.zeros(n_cols)
    w[tableau.basis] = np.maximum(
        _solve_basis(tableau, tableau.rhs, transpose=False), 0.0
    )
    pi_kept = _solve_basis(tableau, tableau.cost[tableau.basis], transpose=True)
    duals = np.zeros(m)
    duals[keep] = pi_kept
    duals *= flip
    return True, float(cost @ w), w, duals


@dataclass(frozen=True)
class EnvelopeSolution:
    """Raw LP outcome at one query, before packing into EvalResult."""

    feasible: bool
    value: float
    theta: np.ndarray
    slack: np.ndarray | None
    xi: np.ndarray
    eta: float


def lower_envelope(
    points: np.ndarray,
    values: np.ndarray,
    x: np.ndarray,
    variant: Variant = Variant.CONVEX,
) -> EnvelopeSolution:
    """Solve the envelope program for raw arrays at a single query x.

    This is the array-level core behind evaluate(); the fit pipeline also
    calls it directly to recompute fitted values and subgradients at the
    data points themselves.
    """
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    n, d = points.shape

    structural = points.T  # (d, n)
    if variant is Variant.CONVEX_NONINCREASING:
        structural = np.hstack([structural, np.eye(d)])
    rows = np.vstack([structural, np.concatenate([np.ones(n), np.zeros(structural.shape[1] - n)])[None, :]])
    rhs = np.concatenate([x, [1.0]])
    cost = np.concatenate([values, np.zeros(structural.shape[1] - n)])

    feas_tol = 1e-9 * (1.0 + float(np.abs(x).max(initial=0.0)))
    feasible, value, w, duals = _solve_equality_lp(rows, rhs, cost, feas_tol)
    if not feasible:
        return EnvelopeSolution(
            feasible=False,
            value=math.inf,
            theta=np.full(n, np.nan),
            slack=None,
            xi=np.full(d, np.nan),
            eta=math.nan,
        )
    slack = w[n:] if variant is Variant.CONVEX_NONINCREASING else None
    return EnvelopeSolution(
        feasible=True,
        value=value,
        theta=w[:n],
        slack=slack,
        xi=duals[:d].copy(),
        eta=float(duals[d]),
    )


def _check_query(model: FitModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.d:
        raise DimensionMismatchError(
            f"query has dimension {x.shape[0]}, model expects {model.d}"
        )
    if not np.isfinite(x).all():
        raise NonFiniteError("query point contains a NaN or infinite entry")
    return x


def evaluate(model: FitModel, x) -> EvalResult:
    """Value of the fitted function at x, with weights and a hyperplane.

    Out-of-domain queries (outside the hull, or hull + R^d_+ for the
    nonincreasing variant) return value=+inf with in_domain=False.
    """
    x = _check_query(model, x)
    sol = lower_envelope(model.points, model.fitted, x, model.variant)
    if not sol.feasible:
        return EvalResult(value=math.inf, in_domain=False)
    support = np.flatnonzero(sol.theta > _WEIGHT_FLOOR)
    return EvalResult(
        value=sol.value,
        in_domain=True,
        subgradient=sol.xi,
        intercept=sol.eta,
        weight_indices=support,
        weight_values=sol.theta[support].copy(),
    )


def subgradient(model: FitModel, x) -> tuple[np.ndarray, float]:
    """Supporting hyperplane (ξ, η) at x: <ξ, X_k> + η ≤ ẑ_k for all k
    and <ξ, x> + η equals the fitted value at x.

    At interior points ξ is a subgradient; at boundary points it is still
    a valid supporting hyperplane. Raises OutsideDomain beyond the hull.
    """
    x = _check_query(model, x)
    sol = lower_envelope(model.points, model.fitted, x, model.variant)
    if not sol.feasible:
        raise OutsideDomainError(f"query {x.tolist()} is outside the domain")
    return sol.xi, sol.eta


def max_affine_extension(model: FitModel, x) -> float:
    """max_j {<ξ_j, x - X_j> + ẑ_j}: a finite-everywhere convex minorant
    of the fitted function that matches it at the data points."""
    x = _check_query(model, x)
    pieces = model.subgradients @ x + (
        model.fitted - np.einsum("ij,ij->i", model.subgradients, model.points)
    )
    return float(pieces.max())

"""Projection of the responses onto the shape-restricted cone.

The program is

    minimize    sum_k (Y_k - z^k)^2
    subject to  <xi_j, X_k - X_j> <= z^k - z^j   for all j != k
                (xi <= 0 componentwise for the nonincreasing variant)

over z in R^n and xi_1..xi_n in R^d. The objective touches z only, so
the Hessian is singular in xi and the minimizer is unique in z alone.
That rules out plain Newton steps and motivates an operator-splitting
(ADMM) iteration: introduce a slack copy s = A x of the constraint
values, alternate a proximal-regularized least squares step in x with a
clip of s onto the nonpositive orthant, and update the multipliers y.
The proximal weight sigma keeps the x-step strictly convex without
biasing the fixed point: stationary points satisfy the original KKT
system exactly, sigma only selects among the optimal xi.

Residuals are reported on the caller's data scale. A polish step reads
the facet structure of the iterate off its lower envelope, solves the
equality-constrained KKT system that pins that structure, and replaces
the iterate only when an explicitly constructed multiplier certifies the
result, typically reaching near machine precision long before the
splitting iteration would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize as opt
import scipy.sparse as sp

from .cone import ConstraintSystem, build_constraints
from .core import (
    Dataset,
    FitConfig,
    FitModel,
    ScaleTransform,
    SolveDiagnostics,
    SolveStatus,
    Variant,
    standardize,
)
from .envelope import lower_envelope
from .errors import CapacityExceededError, DimensionMismatchError
from .oracle import MaxAffine

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_REFACTOR_RATIO = 5.0
_POLISH_TRIGGER_P = 1e-3  # polish once primal residual is this loose (relative)
_POLISH_TRIGGER_D = 1e-1
_POLISH_SPACING = 250  # initial gap between polish attempts, doubled on failure
_POLISH_SPACING_MAX = 4000
_POLISH_ROUNDS = 2  # structure refinement rounds per polish attempt
_ASSIGN_LADDER = (1e-8, 3e-7, 1e-5, 3e-4)  # plane-membership tolerances, x scale
_STRUCTURE_FLOOR = 1e-11  # envelope weights below this are simplex noise


@dataclass
class _Workspace:
    """Mutable solver state for one projection problem."""

    matrix: sp.csr_matrix  # constraint matrix A, (m, N)
    gram: np.ndarray  # dense A^T A, (N, N)
    p_diag: np.ndarray  # diagonal of the objective Hessian (2 on z, 0 on xi)
    q: np.ndarray  # linear objective term (-2Y on z, 0 on xi)
    rho: float
    sigma: float
    factor: tuple  # cho_factor output for P + sigma I + rho A^T A

    def refactor(self) -> None:
        m = self.rho * self.gram
        idx = np.arange(m.shape[0])
        m[idx, idx] += self.p_diag + self.sigma
        self.factor = scipy.linalg.cho_factor(m, lower=True, overwrite_a=True)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.factor, rhs)


def _residuals(
    ws: _Workspace,
    x: np.ndarray,
    s: np.ndarray,
    y: np.ndarray,
    row_weight: np.ndarray | None,
    var_weight: np.ndarray | None,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Primal/dual residual max-norms, reweighted to the caller's scale."""
    ax = ws.matrix @ x
    rp_vec = ax - s
    rd_vec = ws.p_diag * x + ws.q + ws.matrix.T @ y
    rp_scaled = rp_vec if row_weight is None else rp_vec * row_weight
    rd_scaled = rd_vec if var_weight is None else rd_vec * var_weight
    rp = float(np.abs(rp_scaled).max(initial=0.0))
    rd = float(np.abs(rd_scaled).max(initial=0.0))
    return rp, rd, ax, rd_vec


def _snap_to_cone(
    dataset: Dataset, variant: Variant, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Project values onto the cone structure via the lower envelope.

    Evaluates the envelope of (points, values) at every data point and
    keeps the supporting hyperplane of each evaluation. The result is a
    cone member with a feasible subgradient selection; for values
    already in the cone it reproduces them to LP precision.
    """
    n, d = dataset.n, dataset.d
    z_env = np.empty(n)
    xi_env = np.empty((n, d))
    for j in range(n):
        sol = lower_envelope(dataset.points, values, dataset.points[j], variant)
        z_env[j] = sol.value
        xi_env[j] = sol.xi
    if variant is Variant.CONVEX_NONINCREASING:
        np.minimum(xi_env, 0.0, out=xi_env)
    return z_env, xi_env


def _facet_assignments(
    points: np.ndarray,
    z: np.ndarray,
    xi: np.ndarray,
    variant: Variant,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Group a snapped point's data into the flats of its graph.

    Point j's supporting plane passes through (X_j, z_j) with slope
    xi_j; point k is assigned to it when (X_k, z_k) lies on the plane.
    Duplicate member sets are collapsed. Returns (members, clamped):
    members[f, k] marks assignment to flat f, and clamped[f, i] marks
    the coordinates along which the flat is level (nonzero only for the
    nonincreasing variant, where the sign rows can be tight).
    """
    plane = z[:, None] + xi @ points.T
    plane -= np.einsum("ij,ij->i", xi, points)[:, None]
    mask = z[None, :] - plane <= tol
    members, rep = np.unique(mask, axis=0, return_index=True)
    if variant is Variant.CONVEX_NONINCREASING:
        clamped = np.abs(xi[rep]) <= max(_STRUCTURE_FLOOR, tol)
    else:
        clamped = np.zeros((members.shape[0], points.shape[1]), dtype=bool)
    return members, clamped


def _coplanarity_rows(
    points: np.ndarray, members: np.ndarray, clamped: np.ndarray
) -> np.ndarray:
    """Homogeneous equalities pinning each flat to a single affine piece.

    A flat with member set M constrains z_M to the column space of
    [X_M restricted to unclamped coordinates | 1]; the left null space
    of that matrix gives the constraint rows. Flats too small to
    constrain anything (fewer members than the affine dimension they
    span) contribute no rows, and no choice of interpolation weights or
    anchors is involved, so hull corners sitting inside a large flat are
    pinned like any other member.
    """
    n = members.shape[1]
    rows: list[np.ndarray] = []
    for f in range(members.shape[0]):
        m_idx = np.flatnonzero(members[f])
        if m_idx.size < 2:
            continue
        free = np.flatnonzero(~clamped[f])
        span = np.hstack(
            [points[np.ix_(m_idx, free)], np.ones((m_idx.size, 1))]
        )
        left_null = scipy.linalg.null_space(span.T)
        if left_null.shape[1] == 0:
            continue
        block = np.zeros((left_null.shape[1], n))
        block[:, m_idx] = left_null.T
        rows.append(block)
    if not rows:
        return np.zeros((0, n))
    return np.concatenate(rows, axis=0)


def _certificate(
    points: np.ndarray,
    variant: Variant,
    n_pair_rows: int,
    m_rows: int,
    residual_gradient: np.ndarray,
    ax: np.ndarray,
    members: np.ndarray,
    clamped: np.ndarray,
    eps_gap: float,
) -> np.ndarray | None:
    """Nonnegative multiplier on rows tight somewhere on the flats.

    Optimality of a candidate z needs y >= 0 on the constraint rows with
    A^T y matching the objective gradient: per point, the pairwise
    multipliers must balance the flow 2(Y_j - z_j) in the z-block while
    their moments sum to zero in the xi-block (sign rows absorb
    nonpositive moments for the nonincreasing variant). Usable columns
    are the ordered pairs lying on a common flat, which is exactly
    where a multiplier can live regardless of the subgradient selection.
    The objective is the complementarity slack <y, -Ax>, so the LP value
    is the duality gap of the assembled pair; a gap over eps_gap (or an
    infeasible LP) rejects the candidate.
    """
    n, d = points.shape
    if float(np.abs(residual_gradient).max(initial=0.0)) <= 1e-14:
        return np.zeros(m_rows)

    weights = members.astype(np.float64)
    common = weights.T @ weights
    np.fill_diagonal(common, 0.0)
    a_idx, b_idx = np.nonzero(common > 0.0)
    if a_idx.size == 0 or a_idx.size > 500_000:
        return None
    pair_rows = a_idx * (n - 1) + b_idx - (b_idx > a_idx)

    if variant is Variant.CONVEX_NONINCREASING:
        usable = (weights.T @ clamped.astype(np.float64)) > 0.0
        s_point, s_coord = np.nonzero(usable)
        sign_rows = n_pair_rows + s_point * d + s_coord
    else:
        s_point = s_coord = sign_rows = np.zeros(0, dtype=np.int64)

    n_pairs = a_idx.size
    n_cols = n_pairs + s_point.size
    col = np.arange(n_pairs)
    # flow rows 0..n-1, moment rows n + j*d + i
    coo_rows = [a_idx, b_idx]
    coo_cols = [col, col]
    coo_data = [np.ones(n_pairs), -np.ones(n_pairs)]
    for i in range(d):
        coo_rows.append(n + a_idx * d + i)
        coo_cols.append(col)
        coo_data.append(points[b_idx, i] - points[a_idx, i])
    if s_point.size:
        coo_rows.append(n + s_point * d + s_coord)
        coo_cols.append(n_pairs + np.arange(s_point.size))
        coo_data.append(np.ones(s_point.size))
    a_eq = sp.coo_matrix(
        (
            np.concatenate(coo_data),
            (np.concatenate(coo_rows), np.concatenate(coo_cols)),
        ),
        shape=(n * (1 + d), n_cols),
    ).tocsc()
    b_eq = np.concatenate([residual_gradient, np.zeros(n * d)])
    cost = np.maximum(-np.concatenate([ax[pair_rows], ax[sign_rows]]), 0.0)

    result = opt.linprog(
        c=cost, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs"
    )
    if not result.success or float(result.fun) > eps_gap:
        return None
    y = np.zeros(m_rows)
    y[pair_rows] = result.x[:n_pairs]
    y[sign_rows] = result.x[n_pairs:]
    return y


def _polish(
    ws: _Workspace,
    dataset: Dataset,
    variant: Variant,
    x: np.ndarray,
    row_weight: np.ndarray | None,
    var_weight: np.ndarray | None,
    eps_p: float,
    eps_d: float,
    scale: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float] | None:
    """Try to jump from the current iterate to the exact projection.

    Reading a tight set off raw pairwise rows is treacherous: which rows
    are tight depends on the subgradient selection, and the fiber of
    optimal xi is a polytope, so any single selection misses rows that
    the certificate needs. The selection-free object is the flat
    structure of the fitted graph: which points lie on a common affine
    piece. Each round

    - snaps the iterate onto the cone and reads the flats off the
      snapped point's supporting planes,
    - pins the flats (each member set constrained to one free affine
      function, the equality-constrained KKT solve of the detected
      structure) and projects the responses onto that subspace by least
      squares,
    - re-snaps the pinned vector; if its envelope moves it, the
      structure was too coarse and the next round restarts from the
      re-snapped point,
    - certifies the pinned vector with a nonnegative multiplier found by
      the complementarity LP over the refreshed flats, and accepts only
      if the full KKT residuals of the assembled primal-dual pair meet
      the solver tolerances and the LP's duality gap is negligible.

    The pinned projection satisfies the orthogonality identities of the
    exact projection by construction (the pinning rows are homogeneous
    and annihilate constants), so an accepted candidate inherits them to
    least-squares precision. A wrong structure fails membership or
    leaves a certificate gap; it costs a retry round, never a false
    accept.

    Returns (x, s, y, rp, rd) for the accepted candidate, or None.
    """
    n, d = dataset.n, dataset.d
    m_rows = ws.matrix.shape[0]
    n_pair = n * (n - 1)
    responses = -0.5 * ws.q[:n]
    eps_gap = 1e-9 * scale * scale * math.sqrt(n)
    z_c = x[:n]
    seen: set[bytes] = set()

    for _ in range(_POLISH_ROUNDS):
        z_env, xi_env = _snap_to_cone(dataset, variant, z_c)
        reseed: tuple[float, np.ndarray] | None = None
        for tol in _ASSIGN_LADDER:
            members, clamped = _facet_assignments(
                dataset.points, z_env, xi_env, variant, tol * scale
            )
            key = members.tobytes() + clamped.tobytes()
            if key in seen:
                continue
            seen.add(key)

            c_rows = _coplanarity_rows(dataset.points, members, clamped)
            if c_rows.shape[0]:
                mu, *_ = np.linalg.lstsq(c_rows.T, responses, rcond=None)
                z_pin = responses - c_rows.T @ mu
            else:
                z_pin = responses.copy()

            z_fin, xi_fin = _snap_to_cone(dataset, variant, z_pin)
            objective = float((responses - z_fin) @ (responses - z_fin))
            if reseed is None or objective < reseed[0]:
                reseed = (objective, z_fin)
            if float(np.abs(z_fin - z_pin).max(initial=0.0)) > 1e-8 * scale:
                continue

            members_fin, clamped_fin = _facet_assignments(
                dataset.points, z_fin, xi_fin, variant, tol * scale
            )
            x_fin = np.concatenate([z_pin, xi_fin.ravel()])
            ax_fin = ws.matrix @ x_fin
            y_fin = _certificate(
                dataset.points,
                variant,
                n_pair,
                m_rows,
                2.0 * (responses - z_pin),
                ax_fin,
                members_fin,
                clamped_fin,
                eps_gap,
            )
            if y_fin is None:
                continue

            s_fin = np.minimum(ax_fin, 0.0)
            rp, rd, _, _ = _residuals(
                ws, x_fin, s_fin, y_fin, row_weight, var_weight
            )
            if rp <= eps_p and rd <= eps_d:
                return x_fin, s_fin, y_fin, rp, rd
        if reseed is None:
            break
        z_c = reseed[1]
    return None


def project(
    dataset: Dataset,
    system: ConstraintSystem,
    config: FitConfig,
    *,
    row_weight: np.ndarray | None = None,
    var_weight: np.ndarray | None = None,
    scale: float | None = None,
) -> tuple[np.ndarray, np.ndarray, SolveDiagnostics]:
    """Solve the projection QP for a dataset and its constraint system.

    Returns (z, xi, diagnostics); z approximates the Euclidean projection
    of the responses onto the cone, xi is one feasible subgradient matrix.
    The keyword arguments let a caller that pre-scaled the data request
    residual reporting on the original scale; by default residuals and
    the convergence scale refer to this dataset as given.

    Never raises on slow convergence: hitting max_iter returns the best
    iterate seen with status ITER_LIMIT.
    """
    n, d = dataset.n, dataset.d
    n_vars = n * (1 + d)
    y_obs = dataset.responses
    if scale is None:
        scale = 1.0 + float(np.abs(y_obs).max())
    eps_p = config.feas_tol * scale
    eps_d = config.stat_tol * scale

    p_diag = np.concatenate([np.full(n, 2.0), np.zeros(n * d)])
    q = np.concatenate([-2.0 * y_obs, np.zeros(n * d)])

    # trivial program: no constraints means z = Y, xi = 0
    if system.n_rows == 0:
        z = y_obs.copy()
        diag = SolveDiagnostics(
            status=SolveStatus.CONVERGED,
            iterations=0,
            primal_residual=0.0,
            stationarity_residual=0.0,
            objective=0.0,
            polished=False,
            rho_final=config.rho,
            objective_trace=(0.0,),
        )
        return z, np.zeros((n, d)), diag

    dense_bytes = 24 * n_vars * n_vars
    if dense_bytes > config.memory_budget:
        raise CapacityExceededError(
            f"normal-equations workspace for n={n}, d={d} needs about "
            f"{dense_bytes} bytes, over the budget of {config.memory_budget}"
        )

    gram = (system.matrix.T @ system.matrix).toarray()
    ws = _Workspace(
        matrix=system.matrix,
        gram=gram,
        p_diag=p_diag,
        q=q,
        rho=config.rho,
        sigma=config.sigma,
        factor=None,  # set below
    )
    ws.refactor()

    alpha = config.over_relaxation
    x = np.concatenate([y_obs, np.zeros(n * d)])
    s = np.minimum(ws.matrix @ x, 0.0)
    y = np.zeros(system.n_rows)

    best = (x.copy(), s.copy(), y.copy())
    best_score = math.inf
    trace: list[float] = []
    incumbent = math.inf
    polished = False
    status = SolveStatus.ITER_LIMIT
    polish_spacing = _POLISH_SPACING
    next_polish = 0
    iterations = 0

    def objective_of(vec: np.ndarray) -> float:
        r = y_obs - vec[:n]
        return float(r @ r)

    for it in range(1, config.max_iter + 1):
        iterations = it
        rhs = ws.sigma * x - ws.q + ws.matrix.T @ (ws.rho * s - y)
        x_t = ws.solve(rhs)
        ax_t = ws.matrix @ x_t
        x = alpha * x_t + (1.0 - alpha) * x
        v = alpha * ax_t + (1.0 - alpha) * s + y / ws.rho
        s_new = np.minimum(v, 0.0)
        y = ws.rho * (v - s_new)
        s = s_new

        if it % config.check_every != 0 and it != config.max_iter:
            continue

        rp, rd, ax, _ = _residuals(ws, x, s, y, row_weight, var_weight)
        incumbent = min(incumbent, objective_of(x))
        trace.append(incumbent)
        score = max(rp / eps_p, rd / eps_d)
        if score < best_score:
            best_score = score
            best = (x.copy(), s.copy(), y.copy())

        if rp <= eps_p and rd <= eps_d:
            status = SolveStatus.CONVERGED
            break

        can_polish = (
            config.polish
            and it >= next_polish
            and rp <= _POLISH_TRIGGER_P * scale
            and rd <= _POLISH_TRIGGER_D * scale
        )
        if can_polish:
            next_polish = it + polish_spacing
            polish_spacing = min(2 * polish_spacing, _POLISH_SPACING_MAX)
            result = _polish(
                ws,
                dataset,
                system.variant,
                x,
                row_weight,
                var_weight,
                eps_p,
                eps_d,
                scale,
            )
            if result is not None:
                x, s, y = result[0], result[1], result[2]
                incumbent = min(incumbent, objective_of(x))
                trace.append(incumbent)
                status = SolveStatus.CONVERGED
                polished = True
                break

        if config.adaptive_rho:
            ax_norm = float(np.abs(ax).max(initial=0.0))
            s_norm = float(np.abs(s).max(initial=0.0))
            aty = ws.matrix.T @ y
            px = ws.p_diag * x
            denom_p = max(ax_norm, s_norm, 1e-12)
            denom_d = max(
                float(np.abs(px).max(initial=0.0)),
                float(np.abs(ws.q).max(initial=0.0)),
                float(np.abs(aty).max(initial=0.0)),
                1e-12,
            )
            rp_raw = float(np.abs(ws.matrix @ x - s).max(initial=0.0))
            rd_raw = float(np.abs(px + ws.q + aty).max(initial=0.0))
            ratio = (rp_raw / denom_p) / max(rd_raw / denom_d, 1e-16)
            rho_new = min(max(ws.rho * math.sqrt(ratio), _RHO_MIN), _RHO_MAX)
            if (
                rho_new > _REFACTOR_RATIO * ws.rho
                or rho_new < ws.rho / _REFACTOR_RATIO
            ):
                ws.rho = rho_new
                ws.refactor()

    if status is SolveStatus.ITER_LIMIT:
        x, s, y = best

    if config.polish and not polished and status is not SolveStatus.CONVERGED:
        # one final attempt regardless of trigger thresholds
        result = _polish(
            ws,
            dataset,
            system.variant,
            x,
            row_weight,
            var_weight,
            eps_p,
            eps_d,
            scale,
        )
        if result is not None:
            x, s, y = result[0], result[1], result[2]
            polished = True
            status = SolveStatus.CONVERGED

    rp, rd, _, _ = _residuals(ws, x, s, y, row_weight, var_weight)
    incumbent = min(incumbent, objective_of(x))
    trace.append(incumbent)

    z = x[:n].copy()
    xi = x[n:].reshape(n, d).copy()
    diag = SolveDiagnostics(
        status=status,
        iterations=iterations,
        primal_residual=rp,
        stationarity_residual=rd,
        objective=objective_of(x),
        polished=polished,
        rho_final=ws.rho,
        objective_trace=tuple(trace),
    )
    return z, xi, diag


def fit(dataset: Dataset, variant: Variant, config: FitConfig | None = None) -> FitModel:
    """Fit the shape-restricted least squares estimator.

    Pipeline: optionally standardize the data, build the sparse
    constraint system, run the splitting solver, then recompute each
    fitted value and subgradient through the envelope program at the data
    points themselves. The recomputation makes the stored model
    self-consistent to linear-programming precision: evaluating the
    fitted function at X_j reproduces fitted^j, and the stored
    subgradients satisfy the pairwise inequalities far below feas_tol.
    Everything is mapped back to the original data scale.
    """
    if config is None:
        config = FitConfig()

    if config.scaling:
        solve_ds, transform = standardize(dataset)
    else:
        solve_ds, transform = dataset, ScaleTransform.identity(dataset.d)

    system = build_constraints(solve_ds, variant, config.memory_budget)

    n, d = dataset.n, dataset.d
    scale = 1.0 + float(np.abs(dataset.responses).max())
    row_weight = None
    var_weight = None
    if not transform.is_identity:
        # report residuals on the original scale: pairwise rows are
        # invariant, sign rows shrink by 1/x_scale, xi entries grow by it
        row_weight = np.ones(system.n_rows)
        var_weight = np.ones(system.n_vars)
        if variant is Variant.CONVEX_NONINCREASING:
            row_weight[system.n_pair_rows :] = np.tile(1.0 / transform.x_scale, n)
        var_weight[n:] = np.tile(transform.x_scale, n)

    z_s, xi_s, diag = project(
        solve_ds,
        system,
        config,
        row_weight=row_weight,
        var_weight=var_weight,
        scale=scale,
    )

    # self-envelope refresh at every data point (solve scale)
    z_snap, xi_snap = _snap_to_cone(solve_ds, variant, z_s)

    fitted = transform.invert_responses(z_snap)
    subgradients = transform.invert_subgradients(xi_snap)
    fitted.flags.writeable = False
    subgradients.flags.writeable = False

    return FitModel(
        variant=variant,
        points=dataset.points,
        fitted=fitted,
        subgradients=subgradients,
        diagnostics=diag,
        scale_transform=transform,
    )


@dataclass(frozen=True)
class KKTReport:
    """Optimality evidence computed from a fitted model.

    identity_residual_a is |sum_k z_k (Y_k - z_k)| (the fitted vector is
    orthogonal to the residual), identity_residual_b is
    |sum_k Y_k - sum_k z_k| (residuals sum to zero), and witness_max is
    the largest value of sum_k (psi(X_k) - z_k)(Y_k - z_k) over the
    supplied witnesses, which projection optimality bounds above by zero.
    """

    identity_residual_a: float
    identity_residual_b: float
    witness_max: float
    n_witnesses: int

    def as_dict(self) -> dict:
        return {
            "identity_residual_a": self.identity_residual_a,
            "identity_residual_b": self.identity_residual_b,
            "witness_max": self.witness_max,
            "n_witnesses": self.n_witnesses,
        }


def kkt_check(
    model: FitModel, dataset: Dataset, witnesses: list[MaxAffine]
) -> KKTReport:
    """Check the projection optimality conditions against witnesses.

    Each witness must be a convex function (componentwise nonincreasing
    ones for that variant); its evaluations at the design points give a
    cone member psi(X), and optimality of the projection forces
    <psi(X) - z, Y - z> <= 0.
    """
    if model.points.shape != dataset.points.shape:
        raise DimensionMismatchError(
            "model and dataset disagree on the design shape"
        )
    for w in witnesses:
        if w.d != model.d:
            raise DimensionMismatchError(
                f"witness has dimension {w.d}, model expects {model.d}"
            )

    z = model.fitted
    resid = dataset.responses - z
    witness_max = -math.inf if witnesses else math.nan
    for w in witnesses:
        values = w(dataset.points)
        witness_max = max(witness_max, float((values - z) @ resid))

    return KKTReport(
        identity_residual_a=abs(float(z @ resid)),
        identity_residual_b=abs(float(resid.sum())),
        witness_max=witness_max,
        n_witnesses=len(witnesses),
    )

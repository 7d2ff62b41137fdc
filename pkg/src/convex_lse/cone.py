"""Sparse constraint system describing the shape-restricted cone.

The fitted values z in R^n and per-point subgradients xi_1..xi_n in R^d
are stacked as a single vector

    x = (z^1, ..., z^n, xi_1, ..., xi_n)   of length n * (1 + d),

and feasibility of the pair (z, xi) is exactly A x <= 0 where A is built
here. One row per ordered pair (j, k), j != k, encodes the subgradient
inequality

    <xi_j, X_k - X_j> - z^k + z^j <= 0,

so any feasible z is the evaluation of some convex function with
subgradient xi_j at X_j. The nonincreasing variant appends one sign row
xi_{j,i} <= 0 per point and coordinate.

Duplicate design points need no special handling: for X_j = X_k the two
opposing rows force z^j = z^k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Dataset, Variant
from .errors import CapacityExceededError

# rough CSR footprint: float64 data + int32 column index per nonzero
_BYTES_PER_NNZ = 12


@dataclass(frozen=True)
class ConstraintSystem:
    """Immutable sparse system A x <= 0 for one dataset and variant.

    Rows 0 .. n(n-1)-1 are the pairwise rows in lexicographic (j, k)
    order (j outer, k inner, k != j); for the nonincreasing variant rows
    n(n-1) .. n(n-1)+nd-1 are the sign rows in (j, i) order.
    """

    matrix: sp.csr_matrix
    n: int
    d: int
    variant: Variant

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_pair_rows(self) -> int:
        return self.n * (self.n - 1)

    @property
    def n_vars(self) -> int:
        return self.n * (1 + self.d)

    def row_of_pair(self, j: int, k: int) -> int:
        """Row index of the (j, k) subgradient inequality, j != k."""
        if j == k:
            raise ValueError("pairwise rows require j != k")
        return j * (self.n - 1) + k - (k > j)

    def stack(self, z: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Pack (z, xi) into the solver's flat variable ordering."""
        return np.concatenate([np.asarray(z, dtype=np.float64).ravel(),
                               np.asarray(xi, dtype=np.float64).ravel()])

    def unstack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a flat solver vector back into (z, xi)."""
        z = x[: self.n].copy()
        xi = x[self.n :].reshape(self.n, self.d).copy()
        return z, xi

    def residual(self, z: np.ndarray, xi: np.ndarray) -> float:
        """Largest violation max(0, max_r (A x)_r); 0.0 when feasible."""
        if self.n_rows == 0:
            return 0.0
        r = self.matrix @ self.stack(z, xi)
        return max(0.0, float(r.max()))


def estimate_bytes(n: int, d: int, variant: Variant) -> int:
    """Approximate CSR storage for the system, before building it."""
    nnz = n * (n - 1) * (d + 2)
    rows = n * (n - 1)
    if variant is Variant.CONVEX_NONINCREASING:
        nnz += n * d
        rows += n * d
    return nnz * _BYTES_PER_NNZ + (rows + 1) * 8


def build_constraints(
    dataset: Dataset,
    variant: Variant,
    memory_budget: int = 2 << 30,
) -> ConstraintSystem:
    """Assemble the sparse constraint matrix for a dataset.

    Raises CapacityExceededError before allocating anything if the
    estimated CSR footprint exceeds memory_budget bytes.
    """
    n, d = dataset.n, dataset.d
    est = estimate_bytes(n, d, variant)
    if est > memory_budget:
        raise CapacityExceededError(
            f"constraint system for n={n}, d={d} needs about {est} bytes "
            f"of sparse storage, over the budget of {memory_budget}"
        )

    x = dataset.points
    m_pair = n * (n - 1)
    width = d + 2  # z^j, z^k, and the d entries of xi_j

    if m_pair == 0:
        pair_cols = np.empty((0, width), dtype=np.int64)
        pair_vals = np.empty((0, width), dtype=np.float64)
    else:
        j_idx = np.repeat(np.arange(n), n - 1)
        base = np.arange(n - 1)
        k_idx = (base[None, :] + (base[None, :] >= np.arange(n)[:, None])).ravel()

        pair_cols = np.empty((m_pair, width), dtype=np.int64)
        pair_cols[:, 0] = j_idx
        pair_cols[:, 1] = k_idx
        pair_cols[:, 2:] = n + j_idx[:, None] * d + np.arange(d)[None, :]

        pair_vals = np.empty((m_pair, width), dtype=np.float64)
        pair_vals[:, 0] = 1.0  # + z^j
        pair_vals[:, 1] = -1.0  # - z^k
        pair_vals[:, 2:] = x[k_idx] - x[j_idx]

    indices = pair_cols.ravel()
    data = pair_vals.ravel()
    indptr = np.arange(m_pair + 1, dtype=np.int64) * width

    if variant is Variant.CONVEX_NONINCREASING:
        sign_cols = n + np.arange(n * d, dtype=np.int64)
        indices = np.concatenate([indices, sign_cols])
        data = np.concatenate([data, np.ones(n * d)])
        indptr = np.concatenate(
            [indptr, indptr[-1] + np.arange(1, n * d + 1, dtype=np.int64)]
        )

    m = int(indptr.shape[0] - 1)
    matrix = sp.csr_matrix((data, indices, indptr), shape=(m, n * (1 + d)))
    matrix.sort_indices()
    return ConstraintSystem(matrix=matrix, n=n, d=d, variant=variant)

"""Collocation hyper-reduction: greedy row sampling and the weak-constraint test matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SamplingMatrix:
    """Row-selection for collocation; applying it means gathering those rows."""

    subdomain: int
    rows: np.ndarray  # sorted unique local row indices

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]


@dataclass
class WeakConstraintMatrix:
    """Scaled Gaussian compression of the compatibility constraints."""

    matrix: np.ndarray  # (n_c, n_constraints)
    seed: int

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]


def greedy_sample(residual_basis: np.ndarray, n_samples: int, subdomain: int = 0) -> SamplingMatrix:
    """Greedy collocation row selection from a residual POD basis.

    Cycles through the basis columns; each step reconstructs the current
    column from the already-selected rows (via least squares on previously
    visited columns, or the whole basis once every column has been visited)
    and adds the row where the reconstruction error is largest.  Ties break
    toward the lowest row index; fully deterministic.
    """
    B = np.asarray(residual_basis, dtype=float)
    if B.ndim != 2 or B.shape[1] < 1:
        raise ValueError("residual basis must be a 2-d matrix with >= 1 column")
    n_rows, k = B.shape
    if n_samples > n_rows:
        raise ValueError(f"cannot sample {n_samples} rows from {n_rows}")
    if n_samples < 1:
        raise ValueError("need at least one sample")

    selected: list[int] = []
    chosen = np.zeros(n_rows, dtype=bool)
    for j in range(n_samples):
        c = j % k
        if j == 0:
            res = B[:, 0]
        else:
            cols = B[:, :c] if 0 < c <= j else B
            sub = cols[selected]
            alpha, *_ = np.linalg.lstsq(sub, B[selected, c], rcond=None)
            res = B[:, c] - cols @ alpha
        mag = np.abs(res)
        mag[chosen] = -1.0
        pick = int(np.argmax(mag))
        selected.append(pick)
        chosen[pick] = True
    return SamplingMatrix(subdomain=subdomain, rows=np.sort(np.array(selected, dtype=np.intp)))


def identity_test_matrix(n_constraints: int) -> WeakConstraintMatrix:
    """Bypass compression: weak constraints coincide with the strong ones."""
    if n_constraints < 1:
        raise ValueError("need at least one constraint")
    return WeakConstraintMatrix(matrix=np.eye(n_constraints), seed=-1)


def gaussian_test_matrix(n_c: int, n_constraints: int, seed: int) -> WeakConstraintMatrix:
    """i.i.d. standard normal entries scaled by 1/sqrt(n_c), from PCG64(seed)."""
    if not 1 <= n_c <= n_constraints:
        raise ValueError(f"need 1 <= n_c <= {n_constraints}, got {n_c}")
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((n_c, n_constraints)) / np.sqrt(n_c)
    return WeakConstraintMatrix(matrix=C, seed=seed)

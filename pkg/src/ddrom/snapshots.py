"""Snapshot generation and storage over a parameter grid.

Snapshots are monolithic FOM solves at each (a, lambda) point, restricted per
subdomain.  Residual snapshots for hyper-reduction training are the residual
vectors at the Newton iterates of each solve, restricted to subdomain rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ddrom.fom import Grid, BurgersParams, build_problem, solve_fom, NonConvergenceError
from ddrom.partition import DDLayout, restrict_state
from ddrom.io import save_matrix, load_matrix, save_manifest, load_manifest


@dataclass(frozen=True)
class ParameterGrid:
    """Uniform tensor-product grid over (a, lambda), endpoints included."""

    a_range: tuple = (1.0, 1.0e4)
    lam_range: tuple = (5.0, 25.0)
    n_a: int = 80
    n_lam: int = 80

    @property
    def size(self) -> int:
        return self.n_a * self.n_lam

    def points(self) -> np.ndarray:
        """All (a, lambda) pairs, a-fastest, shape (size, 2)."""
        a = np.linspace(*self.a_range, self.n_a)
        l = np.linspace(*self.lam_range, self.n_lam)
        A, L = np.meshgrid(a, l, indexing="xy")
        return np.column_stack([A.ravel(), L.ravel()])

    def serpentine_order(self) -> np.ndarray:
        """Traversal order that flips direction on alternate lambda-rows."""
        order = np.arange(self.size).reshape(self.n_lam, self.n_a)
        order[1::2] = order[1::2, ::-1]
        return order.ravel()


def sample_parameters(a_range, lam_range, n_a, n_lam) -> ParameterGrid:
    if n_a < 1 or n_lam < 1:
        raise ValueError("parameter grid resolutions must be >= 1")
    if a_range[1] < a_range[0] or lam_range[1] < lam_range[0]:
        raise ValueError("empty parameter range")
    return ParameterGrid(tuple(a_range), tuple(lam_range), n_a, n_lam)


@dataclass
class SnapshotSet:
    grid: Grid
    pgrid: ParameterGrid
    nu: float
    abs_tol: float
    params: np.ndarray          # (M, 2) converged parameter points
    X: np.ndarray               # (N_x, M) monolithic states
    X_omega: list               # [i] -> (N_i^Omega, M)
    X_gamma: list               # [i] -> (N_i^Gamma, M)
    R: list = field(default_factory=list)   # [i] -> (N_i^r, M_r) residual snapshots
    skipped: list = field(default_factory=list)

    @property
    def n_snapshots(self) -> int:
        return self.X.shape[1]

    def nearest_index(self, a: float, lam: float) -> int:
        """Training point closest to (a, lam) in range-scaled coordinates."""
        sa = self.pgrid.a_range[1] - self.pgrid.a_range[0] or 1.0
        sl = self.pgrid.lam_range[1] - self.pgrid.lam_range[0] or 1.0
        d = ((self.params[:, 0] - a) / sa) ** 2 + ((self.params[:, 1] - lam) / sl) ** 2
        return int(np.argmin(d))


def generate_snapshots(grid: Grid, pgrid: ParameterGrid, layout: DDLayout,
                       nu: float = 0.1, abs_tol: float | None = None,
                       collect_residuals: bool = True) -> SnapshotSet:
    """Solve the monolithic FOM over the grid (serpentine order, warm starts)."""
    pts = pgrid.points()
    order = pgrid.serpentine_order()
    probe = build_problem(grid, BurgersParams(pts[0, 0], pts[0, 1], nu))
    if abs_tol is None:
        abs_tol = 1e-8 * np.sqrt(probe.n_dof)

    cols = np.empty((probe.n_dof, pgrid.size))
    ok = np.zeros(pgrid.size, dtype=bool)
    res_cols = []
    skipped = []
    warm = None
    for k in order:
        a, lam = pts[k]
        problem = build_problem(grid, BurgersParams(a, lam, nu))
        try:
            x, stats = solve_fom(problem, init=warm, abs_tol=abs_tol,
                                 keep_residual_iterates=collect_residuals)
        except NonConvergenceError:
            # retry from the exact-solution interpolant before giving up
            try:
                x, stats = solve_fom(problem, init=None, abs_tol=abs_tol,
                                     keep_residual_iterates=collect_residuals)
            except NonConvergenceError as exc:
                warnings.warn(f"FOM solve failed at (a, lambda) = ({a}, {lam}): {exc}")
                skipped.append((a, lam))
                continue
        cols[:, k] = x
        ok[k] = True
        warm = x
        if collect_residuals:
            # iterates before convergence carry the informative residuals
            res_cols.extend(r for r in stats.residual_iterates[:-1])

    keep = np.nonzero(ok)[0]
    X = cols[:, keep]
    X_omega = [X[layout.interior[i]] for i in range(layout.n_sub)]
    X_gamma = [X[layout.interface[i]] for i in range(layout.n_sub)]
    R = []
    if collect_residuals and res_cols:
        Rfull = np.column_stack(res_cols)
        R = [Rfull[layout.rows[i]] for i in range(layout.n_sub)]
    return SnapshotSet(grid, pgrid, nu, abs_tol, pts[keep], X, X_omega, X_gamma, R, skipped)


def save_snapshots(snap: SnapshotSet, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    g, pg = snap.grid, snap.pgrid
    save_manifest(path / "manifest.txt", {
        "format_version": 1,
        "nx": g.nx, "ny": g.ny,
        "x0": g.x0, "x1": g.x1, "y0": g.y0, "y1": g.y1,
        "nu": snap.nu,
        "abs_tol": snap.abs_tol,
        "a_min": pg.a_range[0], "a_max": pg.a_range[1],
        "lam_min": pg.lam_range[0], "lam_max": pg.lam_range[1],
        "n_a": pg.n_a, "n_lam": pg.n_lam,
        "n_snapshots": snap.n_snapshots,
        "n_sub": len(snap.X_omega),
        "n_residual_sets": len(snap.R),
    })
    save_matrix(path / "params.mat", snap.params)
    save_matrix(path / "X.mat", snap.X)
    for i, (xo, xg) in enumerate(zip(snap.X_omega, snap.X_gamma)):
        save_matrix(path / f"X_omega_{i}.mat", xo)
        save_matrix(path / f"X_gamma_{i}.mat", xg)
    for i, r in enumerate(snap.R):
        save_matrix(path / f"R_{i}.mat", r)


def load_snapshots(path) -> SnapshotSet:
    path = Path(path)
    m = load_manifest(path / "manifest.txt")
    if int(m["format_version"]) != 1:
        raise ValueError(f"unsupported snapshot format version {m['format_version']}")
    grid = Grid(int(m["nx"]), int(m["ny"]), float(m["x0"]), float(m["x1"]),
                float(m["y0"]), float(m["y1"]))
    pgrid = ParameterGrid((float(m["a_min"]), float(m["a_max"])),
                          (float(m["lam_min"]), float(m["lam_max"])),
                          int(m["n_a"]), int(m["n_lam"]))
    params = load_matrix(path / "params.mat")
    X = load_matrix(path / "X.mat")
    if X.shape[1] != int(m["n_snapshots"]):
        raise ValueError("manifest snapshot count disagrees with matrix columns")
    n_sub = int(m["n_sub"])
    X_omega = [load_matrix(path / f"X_omega_{i}.mat") for i in range(n_sub)]
    X_gamma = [load_matrix(path / f"X_gamma_{i}.mat") for i in range(n_sub)]
    R = [load_matrix(path / f"R_{i}.mat") for i in range(int(m["n_residual_sets"]))]
    return SnapshotSet(grid, pgrid, float(m["nu"]), float(m["abs_tol"]),
                       params, X, X_omega, X_gamma, R)

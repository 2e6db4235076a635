"""Full-order model: 2D steady Burgers' equation on a uniform grid.

Centered finite differences with Dirichlet boundary data taken from the
analytic solution.  Interior unknowns only; boundary values are folded into
the residual.  Unknown ordering is x-fastest lexicographic over interior
nodes, u-block followed by v-block.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [x0, x1] x [y0, y1] with nx * ny points."""

    nx: int
    ny: int
    x0: float = -1.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 0.05

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid must have at least 3 points per direction, got {self.nx}x{self.ny}")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("degenerate domain bounds")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)


@dataclass(frozen=True)
class BurgersParams:
    """Shock position a, shock steepness lam, viscosity nu."""

    a: float
    lam: float
    nu: float = 0.1

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.a < 1:
            raise ValueError("shock-position parameter must be >= 1")
        if self.lam <= 0:
            raise ValueError("shock-steepness parameter must be positive")


def _psi(x, y, a, lam):
    ex = np.exp(lam * (x - 1.0))
    emx = np.exp(-lam * (x - 1.0))
    return a * (1.0 + x) + (ex + emx) * np.cos(lam * y)


def exact_solution(x, y, params: BurgersParams):
    """Analytic velocity pair (u, v) at coordinates (x, y); broadcasts."""
    a, lam, nu = params.a, params.lam, params.nu
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ex = np.exp(lam * (x - 1.0))
    emx = np.exp(-lam * (x - 1.0))
    cos = np.cos(lam * y)
    psi = a * (1.0 + x) + (ex + emx) * cos
    psi_x = a + lam * (ex - emx) * cos
    psi_y = -lam * (ex + emx) * np.sin(lam * y)
    u = -2.0 * nu * psi_x / psi
    v = -2.0 * nu * psi_y / psi
    return u, v


class FomProblem:
    """Discrete residual/Jacobian context for one (grid, params) pair.

    Residual rows and state entries share the same monolithic index space:
    index p in [0, n_nodes) is the u unknown/equation at interior node p,
    index n_nodes + p the v unknown/equation.  Node p sits at grid column
    1 + (p % (nx-2)) and row 1 + (p // (nx-2)).

    Evaluation of a subset of residual rows touches only the stencil support
    of those rows; ``row_eval_count`` tallies the number of scalar residual
    entries computed (used to verify hyper-reduction does no extra work).
    """

    def __init__(self, grid: Grid, params: BurgersParams):
        self.grid = grid
        self.params = params
        nx, ny = grid.nx, grid.ny
        nxi, nyi = nx - 2, ny - 2
        self.n_nodes = nxi * nyi
        self.n_dof = 2 * self.n_nodes
        self.row_eval_count = 0

        # Boundary values on the full grid from the exact solution.
        X, Y = np.meshgrid(grid.xs, grid.ys, indexing="xy")  # shape (ny, nx)
        Ub, Vb = exact_solution(X, Y, params)

        # Interior node p -> neighbor interior index, or -1 if the neighbor
        # is a boundary node; boundary contributions stored separately.
        ix = np.tile(np.arange(nxi), nyi)       # local column of node p
        iy = np.repeat(np.arange(nyi), nxi)     # local row of node p
        self._ix, self._iy = ix, iy

        def nbr(dx, dy):
            jx, jy = ix + dx, iy + dy
            inside = (jx >= 0) & (jx < nxi) & (jy >= 0) & (jy < nyi)
            idx = np.where(inside, jy * nxi + jx, -1)
            # grid coordinates of the neighbor (interior local -> global +1)
            gu = np.where(inside, 0.0, Ub[np.clip(jy + 1, 0, ny - 1), np.clip(jx + 1, 0, nx - 1)])
            gv = np.where(inside, 0.0, Vb[np.clip(jy + 1, 0, ny - 1), np.clip(jx + 1, 0, nx - 1)])
            return idx, gu, gv

        self._e, self._ube, self._vbe = nbr(+1, 0)
        self._w, self._ubw, self._vbw = nbr(-1, 0)
        self._n, self._ubn, self._vbn = nbr(0, +1)
        self._s, self._ubs, self._vbs = nbr(0, -1)
        self._Ub, self._Vb = Ub, Vb

    # -- state helpers -----------------------------------------------------

    def exact_state(self) -> np.ndarray:
        """Exact solution sampled at interior nodes, in monolithic ordering."""
        g = self.grid
        Xi, Yi = np.meshgrid(g.xs[1:-1], g.ys[1:-1], indexing="xy")
        u, v = exact_solution(Xi, Yi, self.params)
        return np.concatenate([u.ravel(), v.ravel()])

    def _fields(self, x: np.ndarray, nodes: np.ndarray):
        """Gather stencil values for ``nodes`` from monolithic state ``x``."""
        nn = self.n_nodes
        u, v = x[:nn], x[nn:]

        def pick(idx, bu, bv):
            i = idx[nodes]
            safe = np.maximum(i, 0)
            uu = np.where(i >= 0, u[safe], bu[nodes])
            vv = np.where(i >= 0, v[safe], bv[nodes])
            return uu, vv

        uP, vP = u[nodes], v[nodes]
        uE, vE = pick(self._e, self._ube, self._vbe)
        uW, vW = pick(self._w, self._ubw, self._vbw)
        uN, vN = pick(self._n, self._ubn, self._vbn)
        uS, vS = pick(self._s, self._ubs, self._vbs)
        return uP, vP, uE, vE, uW, vW, uN, vN, uS, vS

    # -- residual ----------------------------------------------------------

    def residual_rows(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Residual entries for the given monolithic row indices only."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_dof,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n_dof},)")
        rows = np.asarray(rows, dtype=np.intp)
        nn = self.n_nodes
        g = self.grid
        hx, hy, nu = g.hx, g.hy, self.params.nu
        out = np.empty(rows.shape[0])

        is_u = rows < nn
        for comp, sel in ((0, np.nonzero(is_u)[0]), (1, np.nonzero(~is_u)[0])):
            if sel.size == 0:
                continue
            nodes = rows[sel] - comp * nn
            uP, vP, uE, vE, uW, vW, uN, vN, uS, vS = self._fields(x, nodes)
            if comp == 0:
                out[sel] = (
                    uP * (uE - uW) / (2 * hx)
                    + vP * (uN - uS) / (2 * hy)
                    - nu * ((uE - 2 * uP + uW) / hx**2 + (uN - 2 * uP + uS) / hy**2)
                )
            else:
                out[sel] = (
                    uP * (vE - vW) / (2 * hx)
                    + vP * (vN - vS) / (2 * hy)
                    - nu * ((vE - 2 * vP + vW) / hx**2 + (vN - 2 * vP + vS) / hy**2)
                )
        self.row_eval_count += rows.shape[0]
        return out

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.residual_rows(x, np.arange(self.n_dof))

    # -- Jacobian ----------------------------------------------------------

    def jacobian_rows(self, x: np.ndarray, rows: np.ndarray) -> sp.csr_matrix:
        """Jacobian rows (len(rows) x n_dof) of the residual, analytic."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_dof,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n_dof},)")
        rows = np.asarray(rows, dtype=np.intp)
        nn = self.n_nodes
        g = self.grid
        hx, hy, nu = g.hx, g.hy, self.params.nu
        diag = 2 * nu * (1 / hx**2 + 1 / hy**2)

        data, ri, ci = [], [], []

        def add(local_rows, cols, vals):
            keep = cols >= 0
            data.append(vals[keep])
            ri.append(local_rows[keep])
            ci.append(cols[keep])

        is_u = rows < nn
        for comp, sel in ((0, np.nonzero(is_u)[0]), (1, np.nonzero(~is_u)[0])):
            if sel.size == 0:
                continue
            nodes = rows[sel] - comp * nn
            uP, vP, uE, vE, uW, vW, uN, vN, uS, vS = self._fields(x, nodes)
            e, w, n_, s = (self._e[nodes], self._w[nodes], self._n[nodes], self._s[nodes])
            off = comp * nn  # column block of the differentiated component
            other = (1 - comp) * nn
            if comp == 0:
                add(sel, nodes + off, (uE - uW) / (2 * hx) + diag)
                add(sel, np.where(e >= 0, e + off, -1), uP / (2 * hx) - nu / hx**2)
                add(sel, np.where(w >= 0, w + off, -1), -uP / (2 * hx) - nu / hx**2)
                add(sel, np.where(n_ >= 0, n_ + off, -1), vP / (2 * hy) - nu / hy**2)
                add(sel, np.where(s >= 0, s + off, -1), -vP / (2 * hy) - nu / hy**2)
                add(sel, nodes + other, (uN - uS) / (2 * hy))
            else:
                add(sel, nodes + off, (vN - vS) / (2 * hy) + diag)
                add(sel, np.where(e >= 0, e + off, -1), uP / (2 * hx) - nu / hx**2)
                add(sel, np.where(w >= 0, w + off, -1), -uP / (2 * hx) - nu / hx**2)
                add(sel, np.where(n_ >= 0, n_ + off, -1), vP / (2 * hy) - nu / hy**2)
                add(sel, np.where(s >= 0, s + off, -1), -vP / (2 * hy) - nu / hy**2)
                add(sel, nodes + other, (vE - vW) / (2 * hx))

        # scalar stencil coefficients broadcast against node arrays
        data = [np.broadcast_to(d, r.shape).astype(float) for d, r in zip(data, ri)]
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
            shape=(rows.shape[0], self.n_dof),
        )

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        return self.jacobian_rows(x, np.arange(self.n_dof))

    def row_support(self, rows: np.ndarray) -> np.ndarray:
        """Sorted monolithic state indices touched by the given residual rows."""
        rows = np.asarray(rows, dtype=np.intp)
        nn = self.n_nodes
        nodes = rows % nn
        nbrs = [nodes]
        for idx in (self._e, self._w, self._n, self._s):
            k = idx[nodes]
            nbrs.append(k[k >= 0])
        nodes_all = np.unique(np.concatenate(nbrs))
        return np.concatenate([nodes_all, nodes_all + nn])


def build_problem(grid: Grid, params: BurgersParams) -> FomProblem:
    """Assemble the discrete problem; boundary data sampled from the exact solution."""
    return FomProblem(grid, params)


@dataclass
class NewtonStats:
    iterations: int
    residual_norms: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    residual_iterates: list = field(default_factory=list)


class NonConvergenceError(RuntimeError):
    pass


def solve_fom(
    problem: FomProblem,
    init: np.ndarray | None = None,
    abs_tol: float | None = None,
    max_iter: int = 20,
    keep_residual_iterates: bool = False,
) -> tuple[np.ndarray, NewtonStats]:
    """Newton with Armijo backtracking on the monolithic system.

    Default tolerance is 1e-8 * sqrt(n_dof) on ||r||_2; default initial
    guess is the exact-solution interpolant.
    """
    t0 = time.perf_counter()
    if init is None:
        init = problem.exact_state()
    x = np.asarray(init, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state contains non-finite entries")
    if abs_tol is None:
        abs_tol = 1e-8 * np.sqrt(problem.n_dof)

    stats = NewtonStats(iterations=0)
    r = problem.residual(x)
    rn = np.linalg.norm(r)
    stats.residual_norms.append(rn)
    if keep_residual_iterates:
        stats.residual_iterates.append(r.copy())
    for it in range(max_iter):
        if rn <= abs_tol:
            stats.converged = True
            break
        J = problem.jacobian(x)
        dx = spla.spsolve(J.tocsc(), -r)
        # Armijo on phi = 0.5 ||r||^2, c1 = 1e-4, halving steps
        phi0 = 0.5 * rn**2
        slope = -2.0 * phi0  # Newton direction: d(phi) = -||r||^2
        alpha = 1.0
        for _ in range(30):
            r_new = problem.residual(x + alpha * dx)
            if 0.5 * np.dot(r_new, r_new) <= phi0 + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        x = x + alpha * dx
        r = r_new
        rn = np.linalg.norm(r)
        stats.iterations = it + 1
        stats.residual_norms.append(rn)
        if keep_residual_iterates:
            stats.residual_iterates.append(r.copy())
    else:
        stats.wall_time = time.perf_counter() - t0
        raise NonConvergenceError(
            f"Newton failed to reach ||r|| <= {abs_tol:.3e} in {max_iter} iterations "
            f"(final ||r|| = {rn:.3e})"
        )
    if rn <= abs_tol:
        stats.converged = True
    stats.wall_time = time.perf_counter() - t0
    return x, stats

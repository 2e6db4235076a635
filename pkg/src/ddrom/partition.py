"""Algebraic domain decomposition of the monolithic residual system.

Residual rows are partitioned into rectangular blocks of interior grid nodes.
A state index is *interior* to a subdomain when only that subdomain's residual
rows reference it, and *interface* when rows of two or more subdomains do.
Both velocity components of a node are classified identically (the stencil
couples u and v at the node).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ddrom.fom import FomProblem


@dataclass
class DDLayout:
    """Index sets (into the monolithic ordering) for each subdomain."""

    n_sub_x: int
    n_sub_y: int
    n_dof: int
    interior: list    # [i] -> sorted int array, size N_i^Omega
    interface: list   # [i] -> sorted int array, size N_i^Gamma
    rows: list        # [i] -> sorted int array of residual rows, size N_i^r
    constraints: "ConstraintMatrix | None" = None

    @property
    def n_sub(self) -> int:
        return self.n_sub_x * self.n_sub_y

    @property
    def n_constraints(self) -> int:
        return 0 if self.constraints is None else self.constraints.n_constraints


@dataclass
class ConstraintMatrix:
    """Pairwise-equality compatibility constraints on duplicated interface copies.

    mats[i] is the sparse A_i (n_constraints x N_i^Gamma) with entries in
    {-1, 0, +1}; each constraint row has exactly one +1 and one -1 across the
    concatenation of all A_i.
    """

    n_constraints: int
    mats: list = field(default_factory=list)


def decompose(problem: FomProblem, n_sub_x: int, n_sub_y: int) -> DDLayout:
    """Partition residual rows into n_sub_x * n_sub_y rectangular node blocks."""
    g = problem.grid
    nxi, nyi = g.nx - 2, g.ny - 2
    if n_sub_x < 1 or n_sub_y < 1:
        raise ValueError("subdomain counts must be positive")
    if n_sub_x > nxi or n_sub_y > nyi:
        raise ValueError(
            f"more subdomains than interior nodes in a direction: "
            f"{n_sub_x}x{n_sub_y} on {nxi}x{nyi} interior grid"
        )
    nn = problem.n_nodes
    n_sub = n_sub_x * n_sub_y

    # Block id per interior node (near-uniform rectangular blocks).
    bx = np.zeros(nxi, dtype=int)
    for b, chunk in enumerate(np.array_split(np.arange(nxi), n_sub_x)):
        bx[chunk] = b
    by = np.zeros(nyi, dtype=int)
    for b, chunk in enumerate(np.array_split(np.arange(nyi), n_sub_y)):
        by[chunk] = b
    node_block = by[problem._iy] * n_sub_x + bx[problem._ix]

    # Support of each subdomain's rows: its own nodes plus stencil neighbors.
    touched = np.zeros((n_sub, nn), dtype=bool)
    for i in range(n_sub):
        nodes = np.nonzero(node_block == i)[0]
        touched[i, nodes] = True
        for idx in (problem._e, problem._w, problem._n, problem._s):
            k = idx[nodes]
            touched[i, k[k >= 0]] = True
    n_owners = touched.sum(axis=0)

    interior, interface, rows = [], [], []
    for i in range(n_sub):
        sup = np.nonzero(touched[i])[0]
        own = sup[n_owners[sup] == 1]
        shared = sup[n_owners[sup] >= 2]
        interior.append(np.concatenate([own, own + nn]))
        interface.append(np.concatenate([shared, shared + nn]))
        blk = np.nonzero(node_block == i)[0]
        rows.append(np.concatenate([blk, blk + nn]))

    layout = DDLayout(n_sub_x, n_sub_y, problem.n_dof, interior, interface, rows)
    layout.constraints = build_constraints(layout)
    return layout


def build_constraints(layout: DDLayout) -> ConstraintMatrix:
    """One equality row per consecutive pair of duplicated interface copies.

    An index shared by k subdomains contributes a chain of k-1 rows (keeps the
    constraint Jacobian full row rank).
    """
    # owners of each monolithic interface index, in subdomain order
    owners: dict[int, list] = {}
    for i, gam in enumerate(layout.interface):
        for pos, idx in enumerate(gam):
            owners.setdefault(int(idx), []).append((i, pos))

    triples = [[] for _ in range(layout.n_sub)]  # (row, local_col, val) per sub
    row = 0
    for idx in sorted(owners):
        copies = owners[idx]
        for (ia, pa), (ib, pb) in zip(copies[:-1], copies[1:]):
            triples[ia].append((row, pa, 1.0))
            triples[ib].append((row, pb, -1.0))
            row += 1

    mats = []
    for i in range(layout.n_sub):
        t = triples[i]
        r = np.array([a for a, _, _ in t], dtype=int)
        c = np.array([b for _, b, _ in t], dtype=int)
        v = np.array([w for _, _, w in t])
        mats.append(sp.csr_matrix((v, (r, c)), shape=(row, len(layout.interface[i]))))
    return ConstraintMatrix(n_constraints=row, mats=mats)


def restrict_state(x: np.ndarray, layout: DDLayout, i: int):
    """Gather (interior, interface) components of a monolithic state."""
    x = np.asarray(x)
    if x.shape != (layout.n_dof,):
        raise ValueError(f"state has shape {x.shape}, expected ({layout.n_dof},)")
    return x[layout.interior[i]], x[layout.interface[i]]


def scatter_state(layout: DDLayout, pieces) -> np.ndarray:
    """Assemble a monolithic state from per-subdomain (interior, interface) pairs.

    Interface copies are assumed compatible; later subdomains overwrite.
    """
    x = np.zeros(layout.n_dof)
    for i, (xo, xg) in enumerate(pieces):
        x[layout.interior[i]] = xo
        x[layout.interface[i]] = xg
    return x


def scatter_local(problem: FomProblem, layout: DDLayout, i: int, x_omega, x_gamma) -> np.ndarray:
    """Place one subdomain's local state into a monolithic-sized buffer."""
    buf = np.zeros(layout.n_dof)
    buf[layout.interior[i]] = x_omega
    buf[layout.interface[i]] = x_gamma
    return buf


def subdomain_residual(problem: FomProblem, layout: DDLayout, i: int, x_omega, x_gamma,
                       rows: np.ndarray | None = None):
    """Residual rows of subdomain i and Jacobian blocks wrt (interior, interface).

    ``rows`` restricts evaluation to a subset of the subdomain's residual rows
    (monolithic row indices); defaults to all of them.
    """
    x_omega = np.asarray(x_omega, dtype=float)
    x_gamma = np.asarray(x_gamma, dtype=float)
    if x_omega.shape != layout.interior[i].shape or x_gamma.shape != layout.interface[i].shape:
        raise ValueError("local state dimensions do not match layout index sets")
    if rows is None:
        rows = layout.rows[i]
    buf = scatter_local(problem, layout, i, x_omega, x_gamma)
    r = problem.residual_rows(buf, rows)
    J = problem.jacobian_rows(buf, rows)
    return r, J[:, layout.interior[i]], J[:, layout.interface[i]]

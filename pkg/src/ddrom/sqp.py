"""Equality-constrained nonlinear least squares via Lagrange-Newton SQP.

The Hessian of the Lagrangian is replaced by a Gauss-Newton approximation,
block-diagonal over the problem's blocks.  Each iteration factorizes the
sparse KKT system

    [ J^T J + rho I   G^T ] [ dx  ]   [ -J^T r ]
    [ G               0   ] [ lam+] = [ -c     ]

directly and applies a backtracking line search on the l1 merit function.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class Block:
    """One independent unknown block of the constrained least-squares problem.

    residual_fn(x_block) -> (r, J) with J of shape (m, dim).
    constraint_fn(x_block) -> (c_contrib, G) with G of shape (n_constraints, dim);
    the total constraint is the sum of the blocks' contributions.
    """

    dim: int
    residual_fn: Callable
    constraint_fn: Callable | None = None


@dataclass
class SqpOptions:
    max_iter: int = 50
    kkt_tol: float = 1e-8            # absolute
    kkt_rel_tol: float = 1e-10       # relative to the first iterate's KKT residual
    residual_tol: float | None = None  # optional: stop when ||r||_2 <= this and feasible
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30
    regularization: float = 1e-10
    # Over-determined constraints (more rows than unknowns) cannot be enforced
    # exactly; they are then treated as a stiff quadratic penalty via a -delta*I
    # dual block.  None = auto-detect.
    relaxed_constraints: bool | None = None
    constraint_reg: float = 1e-6


class SqpFailure(RuntimeError):
    pass


@dataclass
class SqpResult:
    x_blocks: list
    multipliers: np.ndarray
    iterations: int
    converged: bool
    objective: float
    kkt_history: list = field(default_factory=list)   # (stationarity, feasibility)
    objective_history: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    block_times: list = field(default_factory=list)   # per iteration: [t_block_i]
    serial_time: float = 0.0

    @property
    def parallel_time(self) -> float:
        """Wall time with per-block work replaced by the slowest block."""
        block_part = sum(max(ts) for ts in self.block_times) if self.block_times else 0.0
        all_blocks = sum(sum(ts) for ts in self.block_times)
        return self.serial_time - all_blocks + block_part

    def history_csv(self) -> str:
        lines = ["iteration,objective,stationarity,feasibility,step_length"]
        for i, (obj, (stat, feas), a) in enumerate(
                zip(self.objective_history, self.kkt_history, self.step_lengths + [np.nan])):
            lines.append(f"{i},{obj:.16e},{stat:.16e},{feas:.16e},{a}")
        return "\n".join(lines) + "\n"


def _eval_blocks(blocks, xs, n_constraints, times_out):
    """Evaluate residual and constraint callbacks; record per-block wall time."""
    rs, Js, cs, Gs, ts = [], [], [], [], []
    for blk, x in zip(blocks, xs):
        t0 = time.perf_counter()
        r, J = blk.residual_fn(x)
        r = np.asarray(r, dtype=float)
        if blk.constraint_fn is not None:
            c, G = blk.constraint_fn(x)
            cs.append(np.asarray(c, dtype=float))
            Gs.append(sp.csr_matrix(G))
        else:
            cs.append(np.zeros(n_constraints))
            Gs.append(sp.csr_matrix((n_constraints, blk.dim)))
        rs.append(r)
        Js.append(sp.csr_matrix(J))
        ts.append(time.perf_counter() - t0)
    times_out.append(ts)
    c_total = np.sum(cs, axis=0) if n_constraints else np.zeros(0)
    return rs, Js, c_total, Gs


def solve_constrained_lsq(blocks, n_constraints: int, x0_blocks,
                          multipliers0: np.ndarray | None = None,
                          opts: SqpOptions = SqpOptions()) -> SqpResult:
    """Gauss-Newton SQP over the given blocks."""
    t_start = time.perf_counter()
    xs = [np.asarray(x, dtype=float).copy() for x in x0_blocks]
    for blk, x in zip(blocks, xs):
        if x.shape != (blk.dim,):
            raise ValueError(f"block initial guess has shape {x.shape}, expected ({blk.dim},)")
    lam = np.zeros(n_constraints) if multipliers0 is None else np.asarray(multipliers0, float).copy()

    result = SqpResult(x_blocks=xs, multipliers=lam, iterations=0, converged=False, objective=np.inf)
    rho = opts.regularization
    offsets = np.cumsum([0] + [b.dim for b in blocks])
    n_x = offsets[-1]

    rs, Js, c, Gs = _eval_blocks(blocks, xs, n_constraints, result.block_times)
    stat0 = feas0 = None
    relaxed = opts.relaxed_constraints
    if relaxed is None:
        relaxed = n_constraints > n_x
    delta = opts.constraint_reg if relaxed else 0.0

    for it in range(opts.max_iter):
        obj = 0.5 * sum(float(r @ r) for r in rs)
        grad = np.concatenate([(J.T @ r) for J, r in zip(Js, rs)])
        G = sp.hstack(Gs, format="csr") if n_constraints else None
        if relaxed and n_constraints:
            lam = c / delta  # implied quadratic-penalty multiplier
        stat_vec = grad + (G.T @ lam if n_constraints else 0.0)
        stat = float(np.max(np.abs(stat_vec))) if n_x else 0.0
        feas = float(np.max(np.abs(c))) if n_constraints else 0.0
        if stat0 is None:
            stat0, feas0 = stat, feas
        stat_tol = opts.kkt_tol + opts.kkt_rel_tol * stat0
        feas_tol = opts.kkt_tol + opts.kkt_rel_tol * feas0
        result.objective_history.append(obj)
        result.kkt_history.append((stat, feas))
        feas_ok = relaxed or feas <= feas_tol
        if stat <= stat_tol and feas_ok:
            result.converged = True
            break
        if (opts.residual_tol is not None and not relaxed
                and np.sqrt(2.0 * obj) <= opts.residual_tol and feas_ok):
            result.converged = True
            break

        # Gauss-Newton KKT system
        def assemble(rho_val):
            H = sp.block_diag([(J.T @ J) + rho_val * sp.eye(J.shape[1]) for J in Js],
                              format="csr")
            if n_constraints:
                D = -delta * sp.eye(n_constraints) if relaxed else None
                return sp.bmat([[H, G.T], [G, D]], format="csc")
            return H.tocsc()

        K = assemble(rho)
        rhs = np.concatenate([-grad, -c]) if n_constraints else -grad
        asym = abs(K - K.T).max()
        if asym > 1e-12 * max(abs(K).max(), 1.0):
            raise SqpFailure(f"KKT matrix asymmetry {asym:.3e} exceeds tolerance")

        sol = None
        rho_try = rho
        for _ in range(8):
            try:
                with np.errstate(all="ignore"):
                    sol = spla.splu(K).solve(rhs)
                if np.all(np.isfinite(sol)):
                    break
            except RuntimeError:
                pass
            sol = None
            rho_try = max(rho_try * 10, 1e-12)
            K = assemble(rho_try)
        if sol is None:
            if n_constraints and not relaxed:
                raise SqpFailure(
                    "KKT factorization failed: constraint Jacobian appears rank-deficient "
                    f"({n_constraints} constraint rows on {n_x} unknowns); "
                    "use relaxed_constraints=True or reduce the constraint count")
            raise SqpFailure("KKT factorization failed")

        dx = sol[:n_x]
        lam_new = sol[n_x:] if n_constraints else lam

        # merit line search: l1 penalty (hard constraints) or quadratic (relaxed)
        if relaxed and n_constraints:
            merit0 = obj + float(c @ c) / (2 * delta)
            gradF = grad + G.T @ (c / delta)
            pred = max(-float(gradF @ dx), 0.0)
        else:
            mu = max(1.0, 2.0 * (np.max(np.abs(lam_new)) if n_constraints else 0.0))
            merit0 = obj + mu * np.sum(np.abs(c))
            c_lin = c + (G @ dx) if n_constraints else c
            pred = -float(grad @ dx) + mu * (np.sum(np.abs(c)) - np.sum(np.abs(c_lin)))
            pred = max(pred, 0.0)
        if pred <= 1e-15 * max(1.0, merit0) and feas_ok:
            # descent stalled at the numerical floor
            result.converged = True
            break

        alpha = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            xs_trial = [x + alpha * dx[offsets[i]:offsets[i + 1]] for i, x in enumerate(xs)]
            rs_t, Js_t, c_t, Gs_t = _eval_blocks(blocks, xs_trial, n_constraints, result.block_times)
            obj_t = 0.5 * sum(float(r @ r) for r in rs_t)
            if relaxed and n_constraints:
                merit_t = obj_t + float(c_t @ c_t) / (2 * delta)
            else:
                merit_t = obj_t + mu * np.sum(np.abs(c_t))
            if merit_t <= merit0 - opts.armijo_c1 * alpha * pred or merit_t < merit0 * (1 - 1e-14):
                accepted = True
                break
            alpha *= opts.backtrack_factor
        if not accepted:
            raise SqpFailure(f"line search failed at iteration {it} (merit {merit0:.6e})")

        xs = xs_trial
        rs, Js, c, Gs = rs_t, Js_t, c_t, Gs_t
        if relaxed and n_constraints:
            lam = c / delta
        else:
            lam = lam + alpha * (lam_new - lam)
        result.iterations = it + 1
        result.step_lengths.append(alpha)

    result.x_blocks = xs
    result.multipliers = lam
    result.objective = 0.5 * sum(float(r @ r) for r in rs)
    result.serial_time = time.perf_counter() - t_start
    if not result.converged:
        raise SqpFailure(
            f"SQP did not converge in {opts.max_iter} iterations "
            f"(stationarity {result.kkt_history[-1][0]:.3e}, "
            f"feasibility {result.kkt_history[-1][1]:.3e})")
    return result

import numpy as np
import pytest

from ddrom import (Grid, BurgersParams, build_problem, exact_solution,
                   solve_fom, NonConvergenceError)
from conftest import fd_directional


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(2, 5)
    with pytest.raises(ValueError):
        Grid(5, 5, x0=1.0, x1=-1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        BurgersParams(0.5, 10.0)
    with pytest.raises(ValueError):
        BurgersParams(1.0, 10.0, nu=-0.1)


def test_dof_counts():
    p = build_problem(Grid(482, 26), BurgersParams(1.0, 5.0))
    assert p.n_dof == 2 * 480 * 24 == 23040
    assert build_problem(Grid(3, 3), BurgersParams(1.0, 5.0)).n_dof == 2
    assert build_problem(Grid(122, 14), BurgersParams(1.0, 5.0)).n_dof == 2880


def test_exact_solution_zero_v_on_axis():
    params = BurgersParams(37.0, 13.0, 0.1)
    xs = np.linspace(-1.0, 1.0, 7)
    _, v = exact_solution(xs, np.zeros_like(xs), params)
    assert np.allclose(v, 0.0, atol=1e-14)


def test_exact_solution_against_stream_function_differences():
    # independent oracle: finite differences of the generating function psi
    a, lam, nu = 1.0, 25.0, 0.1
    params = BurgersParams(a, lam, nu)
    x, y = 0.0, 0.025

    def psi(x, y):
        return a * (1 + x) + (np.exp(lam * (x - 1)) + np.exp(-lam * (x - 1))) * np.cos(lam * y)

    h = 1e-7
    psi_x = (psi(x + h, y) - psi(x - h, y)) / (2 * h)
    psi_y = (psi(x, y + h) - psi(x, y - h)) / (2 * h)
    u_ref = -2 * nu * psi_x / psi(x, y)
    v_ref = -2 * nu * psi_y / psi(x, y)
    u, v = exact_solution(x, y, params)
    assert abs(u - u_ref) <= 1e-6 * max(abs(u_ref), 1.0)
    assert abs(v - v_ref) <= 1e-6 * max(abs(v_ref), 1.0)


def test_residual_vanishes_on_constant_field(small_problem):
    # constant velocity with constant boundary data kills every stencil term
    p = small_problem
    c = 0.7
    for name in ("_ube", "_ubw", "_ubn", "_ubs", "_vbe", "_vbw", "_vbn", "_vbs"):
        setattr(p, name, np.full_like(getattr(p, name), c))
    x = np.full(p.n_dof, c)
    assert np.allclose(p.residual(x), 0.0, atol=1e-12)


def test_residual_truncation_error_refines_at_second_order():
    params = BurgersParams(100.0, 10.0, 0.1)
    norms = []
    for nx, ny in ((42, 8), (82, 14)):
        p = build_problem(Grid(nx, ny), params)
        norms.append(np.linalg.norm(p.residual(p.exact_state()), np.inf))
    ratio = norms[0] / norms[1]
    assert 2.6 <= ratio <= 6.0


def test_residual_rows_match_full_residual(small_problem):
    p = small_problem
    rng = np.random.default_rng(3)
    x = p.exact_state() + 0.05 * rng.standard_normal(p.n_dof)
    rows = rng.choice(p.n_dof, size=17, replace=False)
    assert np.array_equal(p.residual_rows(x, rows), p.residual(x)[rows])


def test_residual_rejects_wrong_dimension(small_problem):
    with pytest.raises(ValueError):
        small_problem.residual(np.zeros(small_problem.n_dof + 1))


def test_row_eval_count_tracks_rows_exactly(small_problem):
    p = small_problem
    x = p.exact_state()
    before = p.row_eval_count
    p.residual_rows(x, np.arange(5))
    p.residual(x)
    assert p.row_eval_count - before == 5 + p.n_dof


def test_jacobian_matches_finite_differences(small_problem):
    p = small_problem
    rng = np.random.default_rng(11)
    x = p.exact_state() + 0.1 * rng.standard_normal(p.n_dof)
    J = p.jacobian(x)
    assert J.shape == (p.n_dof, p.n_dof)
    for _ in range(20):
        d = rng.standard_normal(p.n_dof)
        d /= np.linalg.norm(d)
        jd = J @ d
        fd = fd_directional(p.residual, x, d)
        assert np.linalg.norm(jd - fd) <= 1e-6 * max(np.linalg.norm(jd), 1.0)


def test_jacobian_at_constant_state_gives_constant_advection(small_problem):
    # linearizing at u=v=c: the u-equation's dependence on uE is c/2hx - nu/hx^2
    p = small_problem
    c = 0.3
    x = np.full(p.n_dof, c)
    J = p.jacobian(x).toarray()
    g = p.grid
    node = p.n_nodes // 2  # a node with all four neighbors interior
    e = p._e[node]
    assert e >= 0
    assert J[node, e] == pytest.approx(c / (2 * g.hx) - p.params.nu / g.hx**2)


def test_row_support_is_stencil_closure(small_problem):
    p = small_problem
    rng = np.random.default_rng(5)
    rows = rng.choice(p.n_dof, size=9, replace=False)
    sup = p.row_support(rows)
    # oracle: nonzero columns of the analytic Jacobian rows at a generic state
    x = p.exact_state() + 0.1 * rng.standard_normal(p.n_dof)
    cols = np.unique(p.jacobian_rows(x, rows).nonzero()[1])
    assert set(cols) <= set(sup.tolist())
    # and nothing outside the support changes the residual
    mask = np.ones(p.n_dof, dtype=bool)
    mask[sup] = False
    x2 = x.copy()
    x2[mask] += 1.0
    assert np.array_equal(p.residual_rows(x, rows), p.residual_rows(x2, rows))


def test_solve_fom_converges_from_exact_interpolant(small_problem):
    x, stats = solve_fom(small_problem)
    assert stats.converged
    assert stats.iterations <= 3
    tol = 1e-8 * np.sqrt(small_problem.n_dof)
    assert np.linalg.norm(small_problem.residual(x)) <= tol


def test_solve_fom_solution_error_shrinks_under_refinement():
    params = BurgersParams(100.0, 10.0, 0.1)
    errs = []
    for nx, ny in ((42, 8), (82, 14)):
        p = build_problem(Grid(nx, ny), params)
        x, _ = solve_fom(p)
        errs.append(np.linalg.norm(x - p.exact_state()) / np.linalg.norm(p.exact_state()))
    assert errs[1] < errs[0]


def test_solve_fom_nonconvergence_raises(small_problem):
    with pytest.raises(NonConvergenceError):
        solve_fom(small_problem, init=np.zeros(small_problem.n_dof), max_iter=0)


def test_solve_fom_residual_iterates(small_problem):
    _, stats = solve_fom(small_problem, init=np.zeros(small_problem.n_dof),
                         keep_residual_iterates=True)
    assert len(stats.residual_iterates) == stats.iterations + 1
    norms = [np.linalg.norm(r) for r in stats.residual_iterates]
    assert np.allclose(norms, stats.residual_norms)

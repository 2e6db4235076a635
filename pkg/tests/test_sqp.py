import numpy as np
import pytest

from ddrom import Block, SqpOptions, SqpFailure, solve_constrained_lsq


def linear_block(A, b, G=None, d=None):
    def residual_fn(x):
        return A @ x - b, A

    constraint_fn = None
    if G is not None:
        def constraint_fn(x):
            return G @ x - d, G
    return Block(dim=A.shape[1], residual_fn=residual_fn, constraint_fn=constraint_fn)


def test_unconstrained_linear_lsq_one_iteration():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((12, 5))
    b = rng.standard_normal(12)
    res = solve_constrained_lsq([linear_block(A, b)], 0, [np.zeros(5)])
    x_ref = np.linalg.lstsq(A, b, rcond=None)[0]
    assert res.iterations == 1
    assert np.abs(res.x_blocks[0] - x_ref).max() <= 1e-8


def test_feasible_zero_residual_start_takes_no_step():
    A = np.eye(3)
    x_star = np.array([1.0, -2.0, 0.5])
    res = solve_constrained_lsq([linear_block(A, x_star)], 0, [x_star.copy()])
    assert res.iterations <= 1
    assert res.converged
    assert np.abs(res.x_blocks[0] - x_star).max() <= 1e-10


def test_equality_constrained_lsq_matches_kkt_oracle():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((10, 6))
    b = rng.standard_normal(10)
    G = rng.standard_normal((2, 6))
    d = rng.standard_normal(2)
    res = solve_constrained_lsq([linear_block(A, b, G, d)], 2, [np.zeros(6)])
    # dense KKT oracle
    K = np.block([[A.T @ A, G.T], [G, np.zeros((2, 2))]])
    rhs = np.concatenate([A.T @ b, d])
    sol = np.linalg.solve(K, rhs)
    assert np.abs(res.x_blocks[0] - sol[:6]).max() <= 1e-7
    assert np.abs(G @ res.x_blocks[0] - d).max() <= 1e-8


def test_two_blocks_coupled_by_equality():
    # min ||x1 - a||^2 + ||x2 - b||^2  s.t.  x1 - x2 = 0  ->  both = (a+b)/2
    a = np.array([1.0, 3.0])
    b = np.array([5.0, -1.0])
    I = np.eye(2)
    b1 = linear_block(I, a, I, np.zeros(2))
    b2 = Block(dim=2, residual_fn=lambda x: (x - b, I),
               constraint_fn=lambda x: (-x, -I))
    res = solve_constrained_lsq([b1, b2], 2, [np.zeros(2), np.zeros(2)])
    mid = 0.5 * (a + b)
    assert np.abs(res.x_blocks[0] - mid).max() <= 1e-8
    assert np.abs(res.x_blocks[1] - mid).max() <= 1e-8


def test_nonlinear_residual_converges():
    # classic curved-valley least squares, minimum at (1, 1)
    def residual_fn(x):
        r = np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])
        J = np.array([[-20 * x[0], 10.0], [-1.0, 0.0]])
        return r, J

    res = solve_constrained_lsq([Block(2, residual_fn)], 0, [np.array([-1.2, 1.0])],
                                opts=SqpOptions(max_iter=100))
    assert np.abs(res.x_blocks[0] - 1.0).max() <= 1e-6
    assert res.objective <= 1e-12


def test_relaxed_mode_matches_penalty_oracle():
    # more constraint rows than unknowns: auto-switch to quadratic penalty
    rng = np.random.default_rng(4)
    A = rng.standard_normal((8, 3))
    b = rng.standard_normal(8)
    G = rng.standard_normal((5, 3))
    d = rng.standard_normal(5)
    delta = 1e-6
    res = solve_constrained_lsq([linear_block(A, b, G, d)], 5, [np.zeros(3)],
                                opts=SqpOptions(constraint_reg=delta, max_iter=100))
    x_ref = np.linalg.solve(A.T @ A + (G.T @ G) / delta, A.T @ b + (G.T @ d) / delta)
    assert np.abs(res.x_blocks[0] - x_ref).max() <= 1e-5 * max(np.abs(x_ref).max(), 1.0)
    # reported multipliers are the implied penalty multipliers c / delta
    c = G @ res.x_blocks[0] - d
    assert np.abs(res.multipliers - c / delta).max() <= 1e-6 * max(np.abs(c / delta).max(), 1.0)


def test_kkt_conditions_hold_at_convergence():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((9, 4))
    b = rng.standard_normal(9)
    G = rng.standard_normal((1, 4))
    d = np.zeros(1)
    res = solve_constrained_lsq([linear_block(A, b, G, d)], 1, [np.zeros(4)])
    r = A @ res.x_blocks[0] - b
    stat = A.T @ r + G.T @ res.multipliers
    assert np.abs(stat).max() <= 1e-7
    assert np.abs(G @ res.x_blocks[0]).max() <= 1e-8


def test_objective_history_nonincreasing():
    def residual_fn(x):
        r = np.array([x[0] ** 2 - 2.0, x[1] - 1.0])
        J = np.array([[2 * x[0], 0.0], [0.0, 1.0]])
        return r, J

    res = solve_constrained_lsq([Block(2, residual_fn)], 0, [np.array([3.0, -3.0])])
    hist = res.objective_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_max_iterations_raises():
    def residual_fn(x):
        r = np.array([np.exp(x[0]) - 5.0])
        return r, np.array([[np.exp(x[0])]])

    with pytest.raises(SqpFailure, match="did not converge"):
        solve_constrained_lsq([Block(1, residual_fn)], 0, [np.array([-4.0])],
                              opts=SqpOptions(max_iter=1))


def test_bad_initial_guess_shape_rejected():
    A = np.eye(2)
    with pytest.raises(ValueError):
        solve_constrained_lsq([linear_block(A, np.zeros(2))], 0, [np.zeros(3)])


def test_timings_recorded_and_parallel_bound():
    rng = np.random.default_rng(2)
    blocks = [linear_block(rng.standard_normal((6, 3)), rng.standard_normal(6))
              for _ in range(3)]
    res = solve_constrained_lsq(blocks, 0, [np.zeros(3)] * 3)
    assert res.serial_time > 0
    assert 0 < res.parallel_time <= res.serial_time + 1e-12
    assert all(len(ts) == 3 for ts in res.block_times)
    csv = res.history_csv()
    assert csv.splitlines()[0] == "iteration,objective,stationarity,feasibility,step_length"

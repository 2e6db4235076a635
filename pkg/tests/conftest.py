import numpy as np
import pytest

from ddrom import Grid, BurgersParams, build_problem, decompose

# one-line verdicts collected by the acceptance tests, echoed after the run
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.line(line)


@pytest.fixture()
def small_problem():
    """A cheap problem: 12x8 mesh, mild shock parameters."""
    return build_problem(Grid(12, 8), BurgersParams(100.0, 10.0, 0.1))


@pytest.fixture()
def small_layout(small_problem):
    return decompose(small_problem, 2, 2)


def fd_directional(f, x, d, h=1e-6):
    """Central finite difference of f along direction d."""
    return (np.asarray(f(x + h * d)) - np.asarray(f(x - h * d))) / (2 * h)


def fd_jacobian(f, x, h=1e-6):
    """Dense central-difference Jacobian of f at x."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = 1.0
        cols.append(fd_directional(f, x, e, h))
    return np.stack(cols, axis=-1)

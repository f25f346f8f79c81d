import numpy as np
import pytest

from impc.baseline import kkt_matrix, mpc_step, solve_equality_qp
from impc.errors import UnsupportedProblemError
from impc.flow import control_output, residual_kkt
from impc.problem import LinearPlant, build_problem

from conftest import random_problem


def null_basis(H):
    _, s, Vt = np.linalg.svd(H)
    return Vt[np.sum(s > 1e-10 * s[0]):].T


def test_origin(dc):
    z, lam = solve_equality_qp(dc.prob, np.zeros(2))
    assert not np.any(z) and not np.any(lam)
    np.testing.assert_array_equal(mpc_step(dc.prob, np.zeros(2)), [0.0])


def test_kkt_matrix_shape(dc):
    K = kkt_matrix(dc.prob)
    assert K.shape == (150, 150)
    np.testing.assert_array_equal(K, K.T)


@pytest.mark.parametrize("x", [1.0, -2.5])
def test_scalar_toy_grid_search(x):
    prob = build_problem(LinearPlant([[-1.0]], [[2.0]]), 1, 0.5, 1.0, 1.0)
    a, b = prob.A[0, 0], prob.B[0, 0]
    # on the feasible line x1 = a x + b u the cost is u^2 + x1^2
    u_grid = np.arange(-5.0, 5.0, 1e-4)
    cost = u_grid ** 2 + (a * x + b * u_grid) ** 2
    u_best = u_grid[np.argmin(cost)]
    z, _ = solve_equality_qp(prob, np.array([x]))
    assert z[0] == pytest.approx(u_best, abs=1e-4)
    assert z[1] == pytest.approx(a * x + b * z[0], abs=1e-12)
    assert z[0] == pytest.approx(-a * b * x / (1 + b * b), abs=1e-12)


def test_dc_motor_kkt_residuals(dc):
    x = -dc.shift.r
    z, lam = solve_equality_qp(dc.prob, x)
    assert residual_kkt(z, np.zeros(0), lam, x, dc.prob).max() <= 1e-9
    u = mpc_step(dc.prob, x)
    assert np.all(np.isfinite(u)) and np.abs(u).max() < 1e3


def test_random_feasible_perturbations(dc, rng):
    x = -dc.shift.r
    z, _ = solve_equality_qp(dc.prob, x)
    f0 = dc.prob.cost(z)
    N = null_basis(dc.prob.H)
    for _ in range(100):
        d = N @ rng.normal(size=N.shape[1]) * rng.uniform(1e-3, 10)
        assert np.abs(dc.prob.H @ d).max() <= 1e-10
        assert dc.prob.cost(z + d) >= f0 - 1e-9


def test_homogeneity(dc, rng):
    for _ in range(10):
        x = rng.normal(size=2) * 30
        np.testing.assert_allclose(mpc_step(dc.prob, 2 * x), 2 * mpc_step(dc.prob, x), atol=1e-9)


def test_mpc_step_matches_control_output(dc, rng):
    x = rng.normal(size=2)
    z, _ = solve_equality_qp(dc.prob, x)
    np.testing.assert_array_equal(mpc_step(dc.prob, x), control_output(z, dc.prob))


def test_rejects_inequalities(rng):
    _, prob = random_problem(rng, n_ineq=1)
    with pytest.raises(UnsupportedProblemError):
        solve_equality_qp(prob, np.zeros(2))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impc import numerics
from impc.errors import IntegrationError, NonFiniteError, SingularMatrixError

from conftest import taylor_expm

DC_A_C = np.array([[-4.0, -0.03], [0.75, -10.0]])


@pytest.mark.parametrize("M, b, expected", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    (np.diag([2.0, 4.0]), [2, 8], [1, 2]),
    ([[0, 1], [1, 0]], [5, 7], [7, 5]),
])
def test_lu_solve_examples(M, b, expected):
    np.testing.assert_allclose(numerics.lu_solve(M, b), expected, atol=1e-14)


def test_lu_solve_singular():
    with pytest.raises(SingularMatrixError):
        numerics.lu_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
    with pytest.raises(SingularMatrixError):
        numerics.lu_solve(np.zeros((2, 2)), [0.0, 0.0])


def test_lu_solve_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        numerics.lu_solve([[1.0, np.nan], [0.0, 1.0]], [1.0, 1.0])


@pytest.mark.parametrize("n", [1, 5, 40, 200])
def test_lu_roundtrip_random(n, rng):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    M = Q @ np.diag(rng.uniform(1.0, 10.0, n)) @ Q.T + rng.normal(scale=0.1, size=(n, n))
    y = rng.normal(size=n)
    out = numerics.lu_solve(M, M @ y)
    assert np.linalg.norm(out - y) <= 1e-9 * np.linalg.norm(y)
    b = M @ y
    assert np.abs(M @ out - b).max() <= 1e-10 * (1 + np.abs(b).max())


def test_lu_multiple_rhs(rng):
    M = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    Y = rng.normal(size=(6, 3))
    np.testing.assert_allclose(numerics.lu_solve(M, M @ Y), Y, atol=1e-12)


def test_lu_rank():
    assert numerics.lu_rank(np.eye(4)) == 4
    assert numerics.lu_rank([[1, 2, 3], [2, 4, 6]]) == 1
    assert numerics.lu_rank(np.zeros((3, 2))) == 0


@pytest.mark.parametrize("S, expected", [
    (np.diag([-1.0, -3.0]), (-3.0, -1.0)),
    ([[0.0, 1.0], [1.0, 0.0]], (-1.0, 1.0)),
])
@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eig_extremes_examples(S, expected, method):
    assert numerics.sym_eig_extremes(S, method) == pytest.approx(expected, abs=1e-12)


def test_jacobi_matches_lapack(rng):
    X = rng.normal(size=(25, 25))
    S = X + X.T
    lo_j, hi_j = numerics.sym_eig_extremes(S, "jacobi")
    lo_l, hi_l = numerics.sym_eig_extremes(S, "lapack")
    scale = max(abs(lo_l), abs(hi_l))
    assert abs(lo_j - lo_l) <= 1e-9 * scale
    assert abs(hi_j - hi_l) <= 1e-9 * scale
    np.testing.assert_allclose(numerics.jacobi_eigenvalues(S), np.linalg.eigvalsh(S),
                               atol=1e-9 * scale)


def test_eig_rayleigh_bounds(rng):
    X = rng.normal(size=(12, 12))
    S = X + X.T
    lo, hi = numerics.sym_eig_extremes(S)
    for _ in range(100):
        v = rng.normal(size=12)
        v /= np.linalg.norm(v)
        q = v @ S @ v
        assert lo - 1e-9 <= q <= hi + 1e-9


def test_eig_nonfinite():
    with pytest.raises(NonFiniteError):
        numerics.sym_eig_extremes([[np.inf, 0], [0, 1]])


def test_expm_examples():
    np.testing.assert_array_equal(numerics.expm(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(numerics.expm(np.diag([1.0, -1.0])),
                               np.diag([math.e, 1 / math.e]), rtol=1e-14)


def test_expm_dc_motor_against_taylor():
    M = DC_A_C * 0.1
    np.testing.assert_allclose(numerics.expm(M), taylor_expm(M), atol=1e-10, rtol=0)
    # frozen from the 30-term Taylor oracle
    frozen = np.array([[0.6702577025166043, -0.00151214665469541],
                       [0.03780366636738527, 0.36782837157752213]])
    np.testing.assert_allclose(numerics.expm(M), frozen, atol=1e-14)


@pytest.mark.parametrize("scale", [0.1, 1.0, 5.0, 10.0])
def test_expm_relative_accuracy(scale, rng):
    X = rng.normal(size=(5, 5))
    M = scale * X / np.abs(X).sum(axis=1).max()
    ref = taylor_expm(M, terms=80)
    assert np.linalg.norm(numerics.expm(M) - ref) <= 1e-12 * np.linalg.norm(ref) * max(1, scale)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 5.0))
def test_expm_inverse_property(seed, norm):
    X = np.random.default_rng(seed).normal(size=(4, 4))
    M = norm * X / np.linalg.norm(X, 2)
    np.testing.assert_allclose(numerics.expm(M) @ numerics.expm(-M), np.eye(4), atol=1e-9)


def test_rk4_constant_field():
    y = np.array([3.0, -1.0])
    np.testing.assert_array_equal(numerics.rk4_step(lambda t, y: np.zeros(2), 0.0, y, 0.5), y)


def test_rk4_exponential():
    out = numerics.rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.1)
    assert out[0] == pytest.approx(1 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24, abs=1e-15)
    assert out[0] == pytest.approx(1.1051708333333333, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(1e-3, 0.5))
def test_rk4_is_degree4_taylor(lam, h):
    out = numerics.rk4_step(lambda t, y: lam * y, 0.0, np.array([1.0]), h)[0]
    z = lam * h
    assert out == pytest.approx(1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24, rel=1e-13, abs=1e-15)


def test_rk4_linear_matches_expm_to_fifth_order():
    y0 = np.array([1.0, 0.0])
    errs = []
    for h in (0.02, 0.01):
        out = numerics.rk4_step(lambda t, y: DC_A_C @ y, 0.0, y0, h)
        errs.append(np.linalg.norm(out - taylor_expm(DC_A_C * h) @ y0))
    # leading local error term of RK4 is (h ||A||)^5 / 5!
    assert errs[1] <= (0.01 * np.abs(DC_A_C).sum(axis=1).max()) ** 5 / 120
    # halving h cuts the local error by about 2**5
    assert errs[0] / errs[1] == pytest.approx(32, rel=0.15)


def test_rk4_nonfinite_raises():
    with pytest.raises(IntegrationError):
        numerics.rk4_step(lambda t, y: y * np.nan, 0.0, np.ones(1), 0.1)
    with pytest.raises(ValueError):
        numerics.rk4_step(lambda t, y: y, 0.0, np.ones(1), 0.0)

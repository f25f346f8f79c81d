import numpy as np
import pytest

from impc.baseline import solve_equality_qp
from impc.errors import SingularMatrixError
from impc.flow import (ControllerState, FlowParams, control_output, damped_saddle_point,
                       flow_rhs, flow_signals, gamma_flow_rhs, pos_projection, project_equality,
                       residual_flow_equilibrium, residual_kkt, settle)
from impc.problem import LinearPlant, build_problem

from conftest import random_problem, rollout


def random_state(rng, prob, scale=1.0):
    return ControllerState(scale * rng.normal(size=prob.nz),
                           np.abs(scale * rng.normal(size=prob.n_ineq)),
                           scale * rng.normal(size=prob.n_eq))


def test_params_validation():
    assert FlowParams(10, 10).K == 201
    assert FlowParams(2.0).K == 1.0
    for bad in [dict(alpha=0), dict(alpha=1, beta=-1), dict(alpha=1, gamma=-0.1)]:
        with pytest.raises(ValueError):
            FlowParams(**bad)


def test_pos_projection_examples():
    assert pos_projection(-3.0, 0.0) == 0.0
    assert pos_projection(-3.0, 1.0) == -3.0
    assert pos_projection(2.0, 0.0) == 2.0
    np.testing.assert_array_equal(pos_projection([-1.0, -1.0, 4.0], [0.0, 0.5, 0.0]),
                                  [0.0, -1.0, 4.0])
    with pytest.raises(ValueError):
        pos_projection(1.0, -1e-3)


@pytest.mark.parametrize("rhs", [flow_rhs, gamma_flow_rhs])
def test_origin_is_equilibrium(dc, rhs):
    params = FlowParams(10, 10, 0.5)
    out = rhs(ControllerState.zeros(dc.prob), np.zeros(2), dc.prob, params)
    for part in out:
        assert not np.any(part)


def test_beta_zero_is_classical_flow(rng):
    _, prob = random_problem(rng, n_ineq=2)
    s = random_state(rng, prob)
    x = rng.normal(size=2)
    dz, _, dlam = flow_rhs(s, x, prob, FlowParams(3.0, 0.0))
    expected = -2 * prob.F @ s.z - prob.G.T @ s.mu - prob.H.T @ s.lam
    np.testing.assert_allclose(dz, expected, atol=1e-12)
    np.testing.assert_allclose(dlam, prob.H @ s.z + prob.V @ x - 3.0 * s.lam, atol=1e-12)


def test_lambda_prime_evaluation_order(rng):
    _, prob = random_problem(rng)
    s = random_state(rng, prob)
    x = rng.normal(size=2)
    a, b = 2.0, 5.0
    dz, _, dlam = flow_rhs(s, x, prob, FlowParams(a, b))
    dlam_ref = (prob.H @ s.z + prob.V @ x - a * s.lam) / (1 + a * b)
    np.testing.assert_allclose(dlam, dlam_ref, atol=1e-12)
    lam_p = s.lam + b * dlam_ref
    np.testing.assert_allclose(dz, -2 * prob.F @ s.z - (1 + 2 * a * b) * prob.H.T @ lam_p,
                               atol=1e-10)
    sig = flow_signals(s, x, prob, FlowParams(a, b))
    np.testing.assert_allclose(sig["lam_prime"], lam_p, atol=1e-12)
    np.testing.assert_allclose(sig["e"], -sig["xi"] - sig["eta"], atol=0)


def test_mu_dynamics_projected(rng):
    _, prob = random_problem(rng, n_ineq=3)
    s = ControllerState(rng.normal(size=prob.nz), np.zeros(3), np.zeros(prob.n_eq))
    _, dmu, _ = flow_rhs(s, np.zeros(2), prob, FlowParams(1.0))
    assert np.all(dmu >= 0)
    np.testing.assert_allclose(dmu, np.maximum(prob.g(s.z), 0))


def test_gamma_degenerates_to_flow(dc, rng):
    params = FlowParams(10.0, 0.0, 0.0)
    worst = 0.0
    for _ in range(1000):
        s = random_state(rng, dc.prob)
        x = rng.normal(size=2) * 50
        a = flow_rhs(s, x, dc.prob, params)
        b = gamma_flow_rhs(s, x, dc.prob, params)
        worst = max(worst, *(np.abs(p - q).max(initial=0) for p, q in zip(a, b)))
    assert worst <= 1e-12


def test_gamma_degenerates_with_inequalities(rng):
    _, prob = random_problem(rng, n_ineq=2)
    params = FlowParams(2.0)
    for _ in range(50):
        s = random_state(rng, prob)
        x = rng.normal(size=2)
        for p, q in zip(flow_rhs(s, x, prob, params), gamma_flow_rhs(s, x, prob, params)):
            np.testing.assert_allclose(p, q, atol=1e-12)


def test_gamma_substitute_back(rng):
    plant = LinearPlant([[-0.5]], [[1.0]])
    prob = build_problem(plant, 2, 0.1, 1.0, 2.0)
    a, b, gam = 2.0, 3.0, 0.5
    params = FlowParams(a, b, gam)
    for _ in range(20):
        s = random_state(rng, prob)
        x = rng.normal(size=1)
        dz, _, dlam = gamma_flow_rhs(s, x, prob, params)
        r1 = dz + b * prob.H.T @ dlam + 2 * prob.F @ s.z + prob.H.T @ s.lam
        r2 = -gam * prob.H @ dz + (1 + a * b) * dlam - (prob.H @ s.z + prob.V @ x - a * s.lam)
        assert np.abs(r1).max() <= 1e-10
        assert np.abs(r2).max() <= 1e-10


def test_gamma_has_no_k_factor(rng):
    # with gamma = 0 and beta > 0 the extended flow differs from the main flow by K
    _, prob = random_problem(rng)
    s = random_state(rng, prob)
    x = rng.normal(size=2)
    p = FlowParams(1.0, 2.0)
    dz_g, _, dlam_g = gamma_flow_rhs(s, x, prob, p)
    dz_f, _, dlam_f = flow_rhs(s, x, prob, p)
    np.testing.assert_allclose(dlam_g, dlam_f, atol=1e-12)
    lam_p = s.lam + p.beta * dlam_f
    np.testing.assert_allclose(dz_g, -2 * prob.F @ s.z - prob.H.T @ lam_p, atol=1e-10)


def test_control_output(dc, rng):
    z = np.zeros(dc.prob.nz)
    np.testing.assert_array_equal(control_output(z, dc.prob), [0.0])
    z[0] = 3.2
    np.testing.assert_array_equal(control_output(ControllerState(z, np.zeros(0), np.zeros(60)),
                                                 dc.prob), [3.2])
    inputs = rng.normal(size=30)
    zr = rollout(dc.prob.A, dc.prob.B, rng.normal(size=2), inputs)
    assert control_output(zr, dc.prob)[0] == inputs[0]


def test_projection_fixes_feasible_points(dc, rng):
    x = rng.normal(size=2)
    z = rollout(dc.prob.A, dc.prob.B, x, rng.normal(size=30))
    np.testing.assert_allclose(project_equality(z, x, dc.prob), z, atol=1e-9)


def null_basis(H):
    _, s, Vt = np.linalg.svd(H)
    return Vt[np.sum(s > 1e-10 * s[0]):].T


def test_projection_feasible_idempotent_orthogonal(dc, rng):
    prob = dc.prob
    N = null_basis(prob.H)
    assert N.shape[1] == prob.nz - prob.n_eq
    for _ in range(20):
        z = rng.normal(size=prob.nz) * 100
        x = rng.normal(size=2) * 100
        zp = project_equality(z, x, prob)
        assert np.abs(prob.H @ zp + prob.V @ x).max() <= 1e-9
        assert np.abs(project_equality(zp, x, prob) - zp).max() <= 1e-12 * max(1, np.abs(zp).max())
        assert np.abs(N.T @ (z - zp)).max() <= 1e-9 * np.abs(z).max()


def test_projection_null_space_at_zero_state(dc, rng):
    z = null_basis(dc.prob.H) @ rng.normal(size=30)
    np.testing.assert_allclose(project_equality(z, np.zeros(2), dc.prob), z, atol=1e-12)


def test_projection_is_nearest_feasible_point(dc, rng):
    prob = dc.prob
    x = rng.normal(size=2)
    z = rng.normal(size=prob.nz)
    zp = project_equality(z, x, prob)
    N = null_basis(prob.H)
    d0 = np.linalg.norm(z - zp)
    for _ in range(100):
        assert np.linalg.norm(z - (zp + N @ rng.normal(size=N.shape[1]))) >= d0 - 1e-12


def test_projection_rank_deficient():
    plant = LinearPlant([[-1.0]], [[1.0]])
    base = build_problem(plant, 1, 0.1, 1.0, 1.0)
    # a duplicated designer row makes H H' singular
    bad = build_problem(plant, 1, 0.1, 1.0, 1.0, H_extra=base.H, V_extra=base.V)
    with pytest.raises(SingularMatrixError):
        project_equality(np.ones(2), np.zeros(1), bad)


def test_residual_kkt_at_baseline_optimum(dc):
    x = -dc.shift.r
    z, lam = solve_equality_qp(dc.prob, x)
    res = residual_kkt(z, np.zeros(0), lam, x, dc.prob)
    assert res.max() <= 1e-9
    assert residual_kkt(np.zeros(90), np.zeros(0), np.zeros(60), np.zeros(2), dc.prob).max() == 0
    bumped = residual_kkt(z + 1e-3 * np.ones(90), np.zeros(0), lam, x, dc.prob)
    assert 1e-3 < bumped.stationarity < 1e2


def test_equilibrium_damping_gap_at_kkt_point(dc):
    x = -dc.shift.r
    z, lam = solve_equality_qp(dc.prob, x)
    params = FlowParams(10.0, 0.0)
    res = residual_flow_equilibrium(ControllerState(z, np.zeros(0), lam), x, dc.prob, params)
    assert res.damped_eq == pytest.approx(10.0 * np.abs(lam).max(), rel=1e-9)
    assert res.damped_eq > 0
    zero = residual_flow_equilibrium(ControllerState.zeros(dc.prob), np.zeros(2), dc.prob, params)
    assert zero.max() == 0


def test_damped_saddle_point_is_flow_equilibrium(dc, rng):
    params = FlowParams(10.0, 10.0)
    x = rng.normal(size=2)
    z, lam = damped_saddle_point(x, dc.prob, params)
    res = residual_flow_equilibrium(ControllerState(z, np.zeros(0), lam), x, dc.prob, params)
    assert res.max() <= 1e-9
    for part in flow_rhs(ControllerState(z, np.zeros(0), lam), x, dc.prob, params):
        assert np.abs(part).max(initial=0) <= 1e-9


def test_settle_small_problem(rng):
    _, prob = random_problem(rng, N=2)
    params = FlowParams(1.0, 0.5)
    x = rng.normal(size=2)
    state, steps, deriv = settle(ControllerState.zeros(prob), x, prob, params, h=1e-2, tol=1e-11)
    assert deriv <= 1e-11
    z_ref, lam_ref = damped_saddle_point(x, prob, params)
    np.testing.assert_allclose(state.z, z_ref, atol=1e-8)
    np.testing.assert_allclose(state.lam, lam_ref, atol=1e-8)
    res = residual_flow_equilibrium(state, x, prob, params)
    assert res.damped_eq <= 1e-8


def test_settle_keeps_multipliers_nonnegative(rng):
    _, prob = random_problem(rng, n_ineq=3)
    params = FlowParams(1.0, 0.2)
    x = 5 * rng.normal(size=2)
    y = ControllerState.zeros(prob)
    for _ in range(20):
        y, _, _ = settle(y, x, prob, params, h=1e-2, tol=0.0, max_steps=50, check_every=50)
        assert y.mu.min() >= 0
    res = residual_flow_equilibrium(y, x, prob, params)
    assert res.dual == 0


def test_state_check(dc):
    with pytest.raises(Exception):
        ControllerState(np.zeros(3), np.zeros(0), np.zeros(60)).check(dc.prob)


def test_settle_equilibrium_stop(rng):
    _, prob = random_problem(rng, N=2)
    params = FlowParams(1.0, 5.0)
    x = rng.normal(size=2)
    state, steps, _ = settle(ControllerState.zeros(prob), x, prob, params, h=1e-2, tol=1e-9,
                             stop="equilibrium")
    assert residual_flow_equilibrium(state, x, prob, params).max() <= 1e-9
    # one check interval earlier the criterion was not yet met
    early, _, _ = settle(ControllerState.zeros(prob), x, prob, params, h=1e-2, tol=0.0,
                         max_steps=steps - 100, check_every=100)
    assert residual_flow_equilibrium(early, x, prob, params).max() > 1e-9
    with pytest.raises(ValueError):
        settle(ControllerState.zeros(prob), x, prob, params, stop="never")

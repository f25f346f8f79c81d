"""
Primal-dual gradient dynamics used as a feedback controller.

The controller state is ``(z, mu, lam)``: the primal decision vector, the
inequality multipliers and the equality multipliers. It evolves as ::

    lam'  = -alpha/(1+alpha beta) lam + (H z + V x)/(1+alpha beta)
    z'    = -grad f(z) - G' mu - K H' (lam + beta lam')
    mu'   = [G z + g0]^+_mu

with ``K = 1 + 2 alpha beta``, and the plant input is ``u = E z``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import numerics
from .errors import DimensionError, NonFiniteError, SingularMatrixError

__all__ = [
    "FlowParams",
    "ControllerState",
    "pos_projection",
    "flow_rhs",
    "flow_signals",
    "control_output",
    "project_equality",
    "gamma_flow_rhs",
    "KktResiduals",
    "EquilibriumResiduals",
    "residual_kkt",
    "residual_flow_equilibrium",
    "damped_saddle_point",
    "settle",
]


@dataclass(frozen=True)
class FlowParams:
    """Design parameters ``alpha > 0``, ``beta >= 0`` and ``gamma >= 0``."""

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def K(self):
        return 1.0 + 2.0 * self.alpha * self.beta


@dataclass(frozen=True)
class ControllerState:
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, prob):
        return cls(np.zeros(prob.nz), np.zeros(prob.n_ineq), np.zeros(prob.n_eq))

    @classmethod
    def unpack(cls, prob, y):
        nz, nq = prob.nz, prob.n_ineq
        return cls(y[:nz], y[nz:nz + nq], y[nz + nq:])

    def pack(self):
        return np.concatenate([self.z, self.mu, self.lam])

    def check(self, prob):
        if self.z.shape != (prob.nz,) or self.mu.shape != (prob.n_ineq,) \
                or self.lam.shape != (prob.n_eq,):
            raise DimensionError("controller state does not match the problem")
        return self


def pos_projection(sigma, eps):
    """
    Componentwise ``[sigma]^+_eps``: ``sigma`` where ``eps > 0``, else ``max(0, sigma)``.

    Examples
    --------
    >>> pos_projection(-3.0, 0.0)
    0.0
    >>> pos_projection(-3.0, 1.0)
    -3.0
    """
    sigma = np.asarray(sigma, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("projection is undefined for negative multipliers")
    out = np.where(eps > 0, sigma, np.maximum(sigma, 0.0))
    return out.item() if out.ndim == 0 else out


def flow_rhs(state, x, prob, params):
    """
    Time derivatives ``(dz, dmu, dlam)`` of the controller.

    Negative entries of ``mu`` (which RK4 stages can produce near the
    boundary) are read as zero.

    Parameters
    ----------
    state : ControllerState
    x : ndarray
        Measured plant state.
    prob : MpcProblem
    params : FlowParams

    Returns
    -------
    dz, dmu, dlam : ndarray
    """
    a, b = params.alpha, params.beta
    c = 1.0 + a * b
    lam = state.lam
    dlam = (prob.H @ state.z + prob.V @ x - a * lam) / c
    lam_prime = lam + b * dlam
    dz = -prob.grad_cost(state.z) - params.K * (prob.H.T @ lam_prime)
    if prob.n_ineq:
        mu = np.maximum(state.mu, 0.0)
        dz -= prob.G.T @ mu
        dmu = pos_projection(prob.g(state.z), mu)
    else:
        dmu = np.zeros(0)
    return dz, dmu, dlam


def flow_signals(state, x, prob, params):
    """Block-diagram signals ``lam_prime``, ``xi``, ``eta`` and ``e`` (diagnostics only)."""
    _, _, dlam = flow_rhs(state, x, prob, params)
    lam_prime = state.lam + params.beta * dlam
    xi = params.K * (prob.H.T @ lam_prime)
    eta = prob.G.T @ np.maximum(state.mu, 0.0)
    return {"lam_prime": lam_prime, "xi": xi, "eta": eta, "e": -xi - eta}


def control_output(state, prob):
    """Plant input ``u = E z``."""
    z = state.z if isinstance(state, ControllerState) else np.asarray(state)
    return prob.E @ z


def _projector(prob):
    P = prob._cache.get("eq_projector")
    if P is None:
        try:
            factors = prob.hht_factor
        except SingularMatrixError as exc:
            raise SingularMatrixError("H is not of full row rank; equality projection undefined") from exc
        # H' (H H')^{-1}, so that z - P (H z + V x) is the projection
        P = numerics.lu_solve_factored(factors, prob.H).T
        prob._cache["eq_projector"] = P
    return P


def project_equality(z, x, prob):
    """
    Euclidean projection of ``z`` onto ``{z : H z + V x = 0}``.

    The operator ``H'(HH')^{-1}`` depends only on the problem and is built
    once per problem instance.
    """
    z = np.asarray(z, dtype=float)
    return z - _projector(prob) @ (prob.H @ z + prob.V @ x)


def _gamma_factor(prob, params):
    key = ("gamma_schur", params.alpha, params.beta, params.gamma)
    fac = prob._cache.get(key)
    if fac is None:
        c = 1.0 + params.alpha * params.beta
        if not c > 0:
            raise ValueError("1 + alpha beta must be positive")
        schur = c * np.eye(prob.n_eq) + params.gamma * params.beta * (prob.H @ prob.H.T)
        try:
            fac = numerics.lu_factor(schur)
        except SingularMatrixError as exc:
            raise SingularMatrixError("implicit gamma-flow system is singular") from exc
        prob._cache[key] = fac
    return fac


def gamma_flow_rhs(state, x, prob, params):
    """
    Derivatives of the extended flow with look-ahead parameter ``gamma``.

    The extended flow is implicit in ``(dz, dlam)``. For a quadratic cost and
    affine inequalities it is the linear system ::

        dz + beta H' dlam              = -2 F z - G' mu - H' lam
        -gamma H dz + (1+alpha beta) dlam = H z + V x - alpha lam

    which is solved exactly by eliminating ``dz`` and factoring the Schur
    complement ``(1+alpha beta) I + gamma beta H H'`` (cached). Then
    ``dmu = [g(z + gamma dz)]^+_mu``.
    """
    a, b, gam = params.alpha, params.beta, params.gamma
    mu = np.maximum(state.mu, 0.0)
    r1 = -prob.grad_cost(state.z) - prob.H.T @ state.lam
    if prob.n_ineq:
        r1 -= prob.G.T @ mu
    r2 = prob.H @ state.z + prob.V @ x - a * state.lam
    dlam = numerics.lu_solve_factored(_gamma_factor(prob, params), r2 + gam * (prob.H @ r1))
    dz = r1 - b * (prob.H.T @ dlam)
    if prob.n_ineq:
        dmu = pos_projection(prob.g(state.z + gam * dz), mu)
    else:
        dmu = np.zeros(0)
    return dz, dmu, dlam


class KktResiduals(NamedTuple):
    stationarity: float
    primal_eq: float
    primal_ineq: float
    dual: float
    complementarity: float

    def max(self):
        return max(self)


class EquilibriumResiduals(NamedTuple):
    stationarity: float
    primal_ineq: float
    dual: float
    complementarity: float
    damped_eq: float

    def max(self):
        return max(self)


def _inf(v):
    return float(np.abs(v).max(initial=0.0))


def residual_kkt(z, mu, lam, x, prob):
    """Infinity-norm residuals of the KKT conditions of the MPC problem."""
    g = prob.g(z)
    return KktResiduals(
        stationarity=_inf(prob.grad_cost(z) + prob.G.T @ mu + prob.H.T @ lam),
        primal_eq=_inf(prob.h(z, x)),
        primal_ineq=_inf(np.maximum(g, 0.0)),
        dual=_inf(np.minimum(mu, 0.0)),
        complementarity=_inf(mu * g),
    )


def residual_flow_equilibrium(state, x, prob, params):
    """
    Residuals of the flow's equilibrium conditions.

    These differ from the KKT conditions in two places: the equality dual
    enters stationarity with gain ``K``, and the equality constraint is
    damped, ``H z + V x - alpha lam = 0``.
    """
    z, mu, lam = state.z, state.mu, state.lam
    g = prob.g(z)
    return EquilibriumResiduals(
        stationarity=_inf(prob.grad_cost(z) + prob.G.T @ mu + params.K * (prob.H.T @ lam)),
        primal_ineq=_inf(np.maximum(g, 0.0)),
        dual=_inf(np.minimum(mu, 0.0)),
        complementarity=_inf(mu * g),
        damped_eq=_inf(prob.h(z, x) - params.alpha * lam),
    )


def damped_saddle_point(x, prob, params):
    """
    Equilibrium of the equality-only flow for a frozen plant state.

    Solves ``[[2F, K H'], [H, -alpha I]] [z; lam] = [0; -V x]``.
    """
    if prob.n_ineq:
        raise DimensionError("damped saddle point is only defined without inequalities")
    nz, ne = prob.nz, prob.n_eq
    M = np.block([[2.0 * prob.F, params.K * prob.H.T],
                  [prob.H, -params.alpha * np.eye(ne)]])
    sol = numerics.lu_solve(M, np.concatenate([np.zeros(nz), -(prob.V @ x)]))
    return sol[:nz], sol[nz:]


def settle(state, x, prob, params, h=1e-3, tol=1e-8, max_steps=1_000_000, check_every=100,
           rhs=flow_rhs, stop="derivative"):
    """
    Integrate the controller with the plant state frozen until it is stationary.

    ``stop="derivative"`` ends the run once the infinity norm of the
    derivatives is at most ``tol``. ``stop="equilibrium"`` ends it once every
    entry of :func:`residual_flow_equilibrium` is at most ``tol``; this is the
    better test for large ``K beta``, where the derivatives hit round-off
    before the stationarity residual (which is amplified by ``K beta``)
    reaches small absolute values.

    Returns
    -------
    state : ControllerState
        Final state.
    steps : int
        RK4 steps taken.
    deriv : float
        Infinity norm of the derivatives at the final state.
    """
    state.check(prob)
    if stop not in ("derivative", "equilibrium"):
        raise ValueError("stop must be 'derivative' or 'equilibrium'")
    x = np.asarray(x, dtype=float)
    nz, nq = prob.nz, prob.n_ineq

    def f(_t, y):
        s = ControllerState.unpack(prob, y)
        return np.concatenate(rhs(s, x, prob, params))

    y = state.pack()
    deriv = np.inf
    steps = 0
    while steps < max_steps:
        for _ in range(check_every):
            y = numerics.rk4_step(f, 0.0, y, h)
            if nq:
                y[nz:nz + nq] = np.maximum(y[nz:nz + nq], 0.0)
        steps += check_every
        deriv = _inf(f(0.0, y))
        if not np.isfinite(deriv):
            raise NonFiniteError("controller state diverged while settling")
        if stop == "derivative":
            done = deriv <= tol
        else:
            done = residual_flow_equilibrium(ControllerState.unpack(prob, y), x, prob,
                                             params).max() <= tol
        if done:
            break
    return ControllerState.unpack(prob, y), steps, deriv

"""Conventional MPC: solve the equality-constrained QP at every sample."""

import numpy as np

from . import numerics
from .errors import SingularMatrixError, UnsupportedProblemError

__all__ = ["kkt_matrix", "solve_equality_qp", "mpc_step"]


def kkt_matrix(prob):
    """Saddle-point matrix ``[[2F, H'], [H, 0]]`` of the equality-only QP."""
    ne = prob.n_eq
    return np.block([[2.0 * prob.F, prob.H.T], [prob.H, np.zeros((ne, ne))]])


def solve_equality_qp(prob, x):
    """
    Minimize ``z'Fz`` subject to ``H z + V x = 0``.

    The KKT system is assembled and factored from scratch on every call
    (no warm start, no cached factorization).

    Parameters
    ----------
    prob : MpcProblem
        Problem without inequality constraints.
    x : ndarray
        Current plant state.

    Returns
    -------
    z : ndarray
        Optimal decision vector.
    lam : ndarray
        Equality multipliers, with ``2 F z + H' lam = 0``.
    """
    if prob.n_ineq:
        raise UnsupportedProblemError("the baseline solver handles equality constraints only")
    nz = prob.nz
    rhs = np.concatenate([np.zeros(nz), -(prob.V @ np.asarray(x, dtype=float))])
    try:
        sol = numerics.lu_solve(kkt_matrix(prob), rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError("KKT matrix is singular; is H of full row rank?") from exc
    return sol[:nz], sol[nz:]


def mpc_step(prob, x):
    """First planned input of the optimal plan, ``u = E z*``."""
    z, _ = solve_equality_qp(prob, x)
    return prob.E @ z

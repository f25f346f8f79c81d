"""
Condensed finite-horizon MPC problems built from continuous-time LTI plants.

The decision vector stacks the planned inputs first and the predicted
states second::

    z = [u(t), u(t,1), ..., u(t,N-1), x(t,1), ..., x(t,N)]

and the prediction model is imposed as the equality ``H z + V x(t) = 0``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import numerics
from .errors import (DimensionError, InconsistentReferenceError, NonFiniteError,
                     NotPositiveDefiniteError)

__all__ = [
    "LinearPlant",
    "QSRTriple",
    "MpcProblem",
    "TrackingShift",
    "discretize",
    "build_prediction_constraints",
    "build_cost",
    "strong_convexity_rho",
    "shift_to_regulation",
    "selector_E",
    "build_problem",
]


def _matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinearPlant:
    """Continuous-time plant ``dx/dt = A_c x + B_c u``."""

    A_c: np.ndarray
    B_c: np.ndarray

    def __post_init__(self):
        A_c = _matrix(self.A_c, "A_c")
        B_c = _matrix(self.B_c, "B_c")
        if A_c.shape[0] != A_c.shape[1]:
            raise DimensionError("A_c must be square")
        if B_c.shape[0] != A_c.shape[0]:
            raise DimensionError("B_c must have as many rows as A_c")
        object.__setattr__(self, "A_c", A_c)
        object.__setattr__(self, "B_c", B_c)

    @property
    def n(self):
        return self.A_c.shape[0]

    @property
    def m(self):
        return self.B_c.shape[1]

    def rhs(self, x, u):
        return self.A_c @ x + self.B_c @ u


@dataclass(frozen=True)
class QSRTriple:
    """Quadratic supply-rate parameters of a plant, ``[x; u]' [[Q, S], [S', R]] [x; u]``."""

    Q_c: np.ndarray
    S_c: np.ndarray
    R_c: np.ndarray

    def __post_init__(self):
        Q = _matrix(self.Q_c, "Q_c")
        S = _matrix(self.S_c, "S_c")
        R = _matrix(self.R_c, "R_c")
        n, m = S.shape
        if Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionError(f"inconsistent QSR shapes {Q.shape}, {S.shape}, {R.shape}")
        object.__setattr__(self, "Q_c", Q)
        object.__setattr__(self, "S_c", S)
        object.__setattr__(self, "R_c", R)

    @classmethod
    def from_plant(cls, plant):
        """Supply rate that is exact for the storage ``x'x / 2``.

        Along the plant, ``d/dt (x'x/2) = x' A_c x + x' B_c u``, which is the
        QSR form with ``Q = A_c``, ``S = B_c / 2``, ``R = 0``.
        """
        return cls(plant.A_c, 0.5 * plant.B_c, np.zeros((plant.m, plant.m)))


@dataclass(frozen=True)
class TrackingShift:
    """Reference state and the steady input that holds it."""

    r: np.ndarray
    u_r: np.ndarray

    @classmethod
    def none(cls, plant):
        return cls(np.zeros(plant.n), np.zeros(plant.m))


@dataclass(frozen=True, eq=False)
class MpcProblem:
    """
    Condensed MPC problem ``min z'Fz  s.t.  G z + g0 <= 0,  H z + V x = 0``.

    Build instances with :func:`build_problem`; the constructor only checks
    shapes and cost definiteness. Instances are immutable; state-independent
    factorizations are cached on first use.
    """

    N: int
    dt: float
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    V: np.ndarray
    E: np.ndarray
    F: np.ndarray
    rho: float
    G: np.ndarray = None
    g0: np.ndarray = None
    extra_rows: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n, m = self.B.shape
        nz = (m + n) * self.N
        if self.G is None:
            object.__setattr__(self, "G", np.zeros((0, nz)))
        if self.g0 is None:
            object.__setattr__(self, "g0", np.zeros(self.G.shape[0]))
        if self.H.shape[1] != nz or self.V.shape != (self.H.shape[0], n):
            raise DimensionError("H and V do not match the horizon and plant dimensions")
        if self.F.shape != (nz, nz) or self.E.shape != (m, nz):
            raise DimensionError("F or E has the wrong shape")
        if self.G.shape[1] != nz or self.g0.shape != (self.G.shape[0],):
            raise DimensionError("inequality block has the wrong shape")
        if not np.array_equal(self.F, self.F.T):
            raise NotPositiveDefiniteError("cost matrix F must be symmetric")

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def nz(self):
        return self.H.shape[1]

    @property
    def n_eq(self):
        return self.H.shape[0]

    @property
    def n_ineq(self):
        return self.G.shape[0]

    def cost(self, z):
        return float(z @ self.F @ z)

    def grad_cost(self, z):
        return 2.0 * (self.F @ z)

    def g(self, z):
        return self.G @ z + self.g0

    def h(self, z, x):
        return self.H @ z + self.V @ x

    @cached_property
    def hht_factor(self):
        """LU factors of ``H H'`` (raises if H is row-rank deficient)."""
        return numerics.lu_factor(self.H @ self.H.T)


def discretize(plant, dt):
    """
    Zero-order-hold discretization of a continuous-time plant.

    Parameters
    ----------
    plant : LinearPlant
    dt : float
        Sampling period in seconds.

    Returns
    -------
    A, B : ndarray
        ``A = expm(A_c dt)`` and ``B = int_0^dt expm(A_c s) ds B_c``, read off
        the top blocks of ``expm([[A_c, B_c], [0, 0]] dt)``.
    """
    if not dt > 0:
        raise ValueError("sampling period must be positive")
    n, m = plant.n, plant.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = plant.A_c
    aug[:n, n:] = plant.B_c
    Phi = numerics.expm(aug * dt)
    return Phi[:n, :n].copy(), Phi[:n, n:].copy()


def build_prediction_constraints(A, B, N, H_extra=None, V_extra=None):
    """
    Prediction-model equality constraints ``H z + V x = 0``.

    Row block ``p`` encodes ``x(t,p) = A x(t,p-1) + B u(t,p-1)`` with
    ``x(t,0) = x(t)`` supplied through ``V = [A; 0; ...; 0]``. Designer rows
    ``(H_extra, V_extra)`` are appended below when given.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if N < 1:
        raise ValueError("horizon N must be at least 1")
    n, m = B.shape
    if A.shape != (n, n):
        raise DimensionError(f"A has shape {A.shape}, expected {(n, n)}")
    H = np.zeros((n * N, (m + n) * N))
    V = np.zeros((n * N, n))
    xoff = m * N
    for p in range(N):
        rows = slice(p * n, (p + 1) * n)
        H[rows, p * m:(p + 1) * m] = B
        H[rows, xoff + p * n:xoff + (p + 1) * n] = -np.eye(n)
        if p > 0:
            H[rows, xoff + (p - 1) * n:xoff + p * n] = A
    V[:n] = A
    if H_extra is not None or V_extra is not None:
        if H_extra is None or V_extra is None:
            raise DimensionError("designer rows need both H_extra and V_extra")
        H_extra = np.atleast_2d(np.asarray(H_extra, dtype=float))
        V_extra = np.atleast_2d(np.asarray(V_extra, dtype=float))
        if H_extra.shape[1] != H.shape[1] or V_extra.shape != (H_extra.shape[0], n):
            raise DimensionError("designer rows do not match the problem dimensions")
        H = np.vstack([H, H_extra])
        V = np.vstack([V, V_extra])
    return H, V


def build_cost(input_weight, state_weight, N, m=1, n=1, terminal_weight=None):
    """
    Block-diagonal quadratic cost matrix ordered like ``z``.

    ``terminal_weight`` replaces ``state_weight`` on the last predicted
    state when given.
    """
    weights = [input_weight, state_weight] + ([] if terminal_weight is None else [terminal_weight])
    if min(weights) <= 0:
        raise ValueError("cost weights must be positive")
    diag = np.concatenate([np.full(m * N, float(input_weight)),
                           np.full(n * N, float(state_weight))])
    if terminal_weight is not None:
        diag[-n:] = float(terminal_weight)
    return np.diag(diag)


def strong_convexity_rho(F):
    """Largest ``rho`` with ``grad f(z)' z >= rho z'z`` for ``f = z'Fz``: ``2 lambda_min(F)``."""
    lo, _ = numerics.sym_eig_extremes(F)
    if lo <= 0:
        raise NotPositiveDefiniteError(f"F is not positive definite (min eigenvalue {lo:.3g})")
    return 2.0 * lo


def selector_E(N, m, n):
    """``E = [I 0 ... 0]``, picking the current input out of ``z``."""
    if min(N, m, n) < 1:
        raise ValueError("dimensions must be positive")
    E = np.zeros((m, (m + n) * N))
    E[:, :m] = np.eye(m)
    return E


def shift_to_regulation(plant, r, tol=1e-9):
    """
    Steady input for a reference state.

    Solves ``B_c u_r = -A_c r`` in the least-squares sense (minimum norm when
    underdetermined) and rejects references that no input can hold.

    Raises
    ------
    InconsistentReferenceError
        If the least-squares residual exceeds ``tol * (1 + ||A_c r||)``.
    """
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.shape != (plant.n,):
        raise DimensionError(f"reference has {r.size} entries, plant has {plant.n} states")
    rhs = -plant.A_c @ r
    u_r = np.linalg.pinv(plant.B_c) @ rhs
    residual = np.abs(plant.B_c @ u_r - rhs).max(initial=0.0)
    if residual > tol * (1.0 + np.abs(rhs).max(initial=0.0)):
        raise InconsistentReferenceError(
            f"reference {r} cannot be held by any constant input (residual {residual:.3g})")
    return TrackingShift(r=r, u_r=u_r)


def build_problem(plant, N, dt, input_weight=1.0, state_weight=1.0, terminal_weight=None,
                  H_extra=None, V_extra=None, G=None, g0=None):
    """
    Assemble the full condensed problem for a plant.

    Inequality constraints are affine, ``G z + g0 <= 0``; leave ``G`` unset
    for an equality-only problem.
    """
    A, B = discretize(plant, dt)
    H, V = build_prediction_constraints(A, B, N, H_extra, V_extra)
    F = build_cost(input_weight, state_weight, N, plant.m, plant.n, terminal_weight)
    nz = F.shape[0]
    if G is not None:
        G = np.atleast_2d(np.asarray(G, dtype=float))
        g0 = np.zeros(G.shape[0]) if g0 is None else np.asarray(g0, dtype=float).reshape(-1)
    elif g0 is not None:
        raise DimensionError("g0 given without G")
    return MpcProblem(
        N=N, dt=float(dt), A=A, B=B, H=H, V=V,
        E=selector_E(N, plant.m, plant.n), F=F, rho=strong_convexity_rho(F),
        G=G if G is not None else np.zeros((0, nz)), g0=g0,
        extra_rows=0 if H_extra is None else H.shape[0] - plant.n * N,
    )

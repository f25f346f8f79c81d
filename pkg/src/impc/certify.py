"""
Dissipativity-based stability certificates and runtime energy monitors.

Quadratic forms in this module act on the stacked vector ``[z; x]``
(controller first) unless a function says otherwise. ``x`` is always the
plant state in regulation coordinates, i.e. measured from the reference.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import numerics
from .errors import DimensionError
from .problem import QSRTriple

__all__ = [
    "COEFFICIENT_MODES",
    "CertificateInputs",
    "StorageReport",
    "state_coefficient",
    "flow_supply_matrix",
    "plant_supply_matrix",
    "supply_rate_flow",
    "supply_rate_plant",
    "build_Q_all",
    "check_negative_definite",
    "DeltaSearchResult",
    "search_delta",
    "storage_report",
    "storage_series",
    "DissipationReport",
    "dissipation_monitor",
]

COEFFICIENT_MODES = ("theorem", "proof")


def state_coefficient(alpha, beta, mode="theorem"):
    """
    Weight on ``x'A'Ax`` in the controller's supply rate.

    ``"theorem"`` gives ``1 / (4 alpha (1 + alpha beta))``. ``"proof"`` gives
    ``(1 + 2 alpha beta)^2 / (4 alpha (1 + alpha beta))``, which is what
    completing the square in the multiplier storage actually produces.
    """
    denom = 4.0 * alpha * (1.0 + alpha * beta)
    if mode == "theorem":
        return 1.0 / denom
    if mode == "proof":
        return (1.0 + 2.0 * alpha * beta) ** 2 / denom
    raise ValueError(f"coefficient mode must be one of {COEFFICIENT_MODES}, got {mode!r}")


@dataclass(frozen=True)
class CertificateInputs:
    """
    Everything the certificate and the monitors need.

    ``rho`` defaults to the problem's strong-convexity constant; passing a
    different value is allowed for sensitivity studies.
    """

    qsr: QSRTriple
    prob: object
    alpha: float
    beta: float = 0.0
    delta: float = 1.0
    rho: Optional[float] = None
    coefficient_mode: str = "theorem"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.coefficient_mode not in COEFFICIENT_MODES:
            raise ValueError(f"coefficient mode must be one of {COEFFICIENT_MODES}")
        if self.rho is None:
            object.__setattr__(self, "rho", float(self.prob.rho))
        if self.qsr.S_c.shape != (self.prob.n, self.prob.m):
            raise DimensionError("QSR triple does not match the plant dimensions")

    def replace(self, **changes):
        fields = dict(qsr=self.qsr, prob=self.prob, alpha=self.alpha, beta=self.beta,
                      delta=self.delta, rho=self.rho, coefficient_mode=self.coefficient_mode)
        fields.update(changes)
        return CertificateInputs(**fields)

    @property
    def paper_literal(self):
        """False when designer rows were appended to ``V`` (``V'V`` then replaces ``A'A``)."""
        return self.prob.extra_rows == 0

    @property
    def label(self):
        return "paper-literal" if self.paper_literal else "extended, not paper-literal"


def _state_gram(prob):
    # V'V equals A'A exactly when V has no designer rows
    return prob.A.T @ prob.A if prob.extra_rows == 0 else prob.V.T @ prob.V


def flow_supply_matrix(inputs, mode=None):
    """Matrix of the controller's supply rate on ``[z; x]``."""
    p = inputs.prob
    mode = inputs.coefficient_mode if mode is None else mode
    c = state_coefficient(inputs.alpha, inputs.beta, mode)
    b = inputs.beta
    HtV = p.H.T @ p.V
    return np.block([
        [-inputs.rho * np.eye(p.nz) - b * (p.H.T @ p.H), -b * HtV],
        [-b * HtV.T, c * _state_gram(p)],
    ])


def plant_supply_matrix(inputs):
    """Matrix of the plant's supply rate with ``u = E z``, on ``[x; z]``."""
    q, E = inputs.qsr, inputs.prob.E
    return np.block([
        [q.Q_c, q.S_c @ E],
        [E.T @ q.S_c.T, E.T @ q.R_c @ E],
    ])


def supply_rate_flow(z, x, inputs, mode=None):
    v = np.concatenate([z, x])
    return float(v @ flow_supply_matrix(inputs, mode) @ v)


def supply_rate_plant(x, z, inputs):
    v = np.concatenate([x, z])
    return float(v @ plant_supply_matrix(inputs) @ v)


def _q_all_parts(inputs, mode=None):
    """Split ``Q_all = Q0 + delta * Q1`` (both unsymmetrized)."""
    p, q = inputs.prob, inputs.qsr
    E = p.E
    n = p.n
    Q0 = flow_supply_matrix(inputs, mode)
    Q1 = np.block([
        [E.T @ q.R_c @ E, E.T @ q.S_c.T],
        [q.S_c @ E, q.Q_c],
    ])
    assert Q1.shape == Q0.shape == (p.nz + n, p.nz + n)
    return Q0, Q1


def build_Q_all(inputs, mode=None):
    """
    Composite matrix whose negative definiteness certifies the closed loop.

    Returns the symmetric part, so the result is exactly symmetric.
    """
    Q0, Q1 = _q_all_parts(inputs, mode)
    M = Q0 + inputs.delta * Q1
    return 0.5 * (M + M.T)


def check_negative_definite(S, margin=0.0):
    """Return ``(max eigenvalue < -margin, max eigenvalue)``."""
    _, hi = numerics.sym_eig_extremes(S)
    return hi < -margin, hi


class DeltaSearchResult(NamedTuple):
    delta: Optional[float]
    best_delta: float
    max_eigenvalue: float
    certified: bool
    grid: np.ndarray
    max_eigenvalues: np.ndarray


def search_delta(inputs, grid=None, mode=None):
    """
    Scan ``delta`` for the most negative top eigenvalue of ``Q_all``.

    Parameters
    ----------
    inputs : CertificateInputs
        Its ``delta`` is ignored.
    grid : array_like, optional
        Positive candidates; default 61 log-spaced points on [1e-3, 1e3].

    Returns
    -------
    DeltaSearchResult
        ``delta`` is the best grid point if it certifies and None otherwise.
        Ties go to the smaller ``delta``.
    """
    grid = np.logspace(-3, 3, 61) if grid is None else np.sort(np.asarray(grid, dtype=float).ravel())
    if grid.size == 0:
        raise ValueError("delta grid is empty")
    if np.any(grid <= 0):
        raise ValueError("delta grid must be positive")
    Q0, Q1 = _q_all_parts(inputs, mode)
    Q0 = 0.5 * (Q0 + Q0.T)
    Q1 = 0.5 * (Q1 + Q1.T)
    tops = np.array([numerics.sym_eig_extremes(Q0 + d * Q1)[1] for d in grid])
    k = int(np.argmin(tops))
    certified = bool(tops[k] < 0)
    return DeltaSearchResult(float(grid[k]) if certified else None, float(grid[k]),
                             float(tops[k]), certified, grid, tops)


@dataclass(frozen=True)
class StorageReport:
    S_flow: float
    S_plant: float
    V_lyap: float
    w_flow: float
    w_plant: float
    q_bound: float


def storage_report(state, x, inputs):
    """Storage functions, supply rates and the Lyapunov bound at one instant."""
    z = state.z
    S_flow = 0.5 * float(z @ z + state.mu @ state.mu + state.lam @ state.lam)
    S_plant = 0.5 * float(x @ x)
    w_flow = supply_rate_flow(z, x, inputs)
    w_plant = supply_rate_plant(x, z, inputs)
    v = np.concatenate([z, x])
    q = float(v @ build_Q_all(inputs) @ v)
    return StorageReport(S_flow, S_plant, S_flow + inputs.delta * S_plant, w_flow, w_plant, q)


def storage_series(x, z, mu, lam, inputs, mode=None):
    """
    Vectorized :func:`storage_report` over trajectories (one row per sample).

    Returns a dict of 1-D arrays keyed like the fields of StorageReport.
    """
    x, z = np.atleast_2d(x), np.atleast_2d(z)
    mu = np.asarray(mu).reshape(len(z), -1)
    lam = np.asarray(lam).reshape(len(z), -1)
    Mf = flow_supply_matrix(inputs, mode)
    Mp = plant_supply_matrix(inputs)
    Q = build_Q_all(inputs, mode)
    zx = np.hstack([z, x])
    xz = np.hstack([x, z])
    S_flow = 0.5 * (np.sum(z * z, 1) + np.sum(mu * mu, 1) + np.sum(lam * lam, 1))
    S_plant = 0.5 * np.sum(x * x, 1)
    return {
        "S_flow": S_flow,
        "S_plant": S_plant,
        "V_lyap": S_flow + inputs.delta * S_plant,
        "w_flow": np.einsum("ij,jk,ik->i", zx, Mf, zx),
        "w_plant": np.einsum("ij,jk,ik->i", xz, Mp, xz),
        "q_bound": np.einsum("ij,jk,ik->i", zx, Q, zx),
    }


@dataclass
class DissipationReport:
    """Per-sample residuals ``dS/dt - w``; positive values are excess energy."""

    times: np.ndarray
    flow: np.ndarray
    plant: np.ndarray
    lyapunov: np.ndarray
    flow_flags: np.ndarray
    plant_flags: np.ndarray
    lyapunov_flags: np.ndarray

    @property
    def n_violations(self):
        return {"flow": int(self.flow_flags.sum()), "plant": int(self.plant_flags.sum()),
                "lyapunov": int(self.lyapunov_flags.sum())}

    @property
    def ok(self):
        return not (self.flow_flags.any() or self.plant_flags.any() or self.lyapunov_flags.any())


def dissipation_monitor(log, inputs, mode="proof", rtol=1e-4):
    """
    Check the dissipation inequalities along a logged trajectory.

    Storage derivatives are estimated at every interior sample by the
    fourth-order central difference ::

        dS/dt(t_k) ~ (S[k-2] - 8 S[k-1] + 8 S[k+1] - S[k+2]) / (12 dt)

    and compared with the supply rate at the same sample. A sample is
    flagged when ``dS/dt - w > rtol (1 + |w|)``. The first and last two
    samples have no centred stencil and are not checked.

    Parameters
    ----------
    log : SimLog
        Must carry ``times``, ``x_shifted``, ``z``, ``mu`` and ``lam``.
    inputs : CertificateInputs
    mode : {"proof", "theorem"}
        Coefficient used for the controller supply rate and for ``q``.
    """
    t = np.asarray(log.times, dtype=float)
    if t.size < 5:
        empty = np.zeros(0)
        flags = np.zeros(0, dtype=bool)
        return DissipationReport(empty, empty, empty, empty, flags, flags, flags)
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ValueError("dissipation monitor needs a uniformly sampled log")
    h = dt[0]
    s = storage_series(log.x_shifted, log.z, log.mu, log.lam, inputs, mode)

    def residual(S, w):
        dS = (S[:-4] - 8.0 * S[1:-3] + 8.0 * S[3:-1] - S[4:]) / (12.0 * h)
        wk = w[2:-2]
        res = dS - wk
        return res, res > rtol * (1.0 + np.abs(wk))

    flow, ff = residual(s["S_flow"], s["w_flow"])
    plant, pf = residual(s["S_plant"], s["w_plant"])
    lyap, lf = residual(s["V_lyap"], s["q_bound"])
    return DissipationReport(t[2:-2], flow, plant, lyap, ff, pf, lf)

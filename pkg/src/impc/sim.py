"""
Closed-loop simulation of a continuous-time plant under iMPC or sampled MPC.

Simulations run in regulation coordinates ``x~ = x - r``, ``u~ = u - u_r``;
logs report both the shifted and the original quantities.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .baseline import kkt_matrix, solve_equality_qp
from .certify import CertificateInputs, storage_series
from .errors import DivergenceError, IntegrationError
from .flow import (ControllerState, FlowParams, flow_rhs, flow_signals, gamma_flow_rhs,
                   project_equality)
from .problem import QSRTriple, TrackingShift

__all__ = [
    "CONTROLLERS",
    "SimConfig",
    "SimLog",
    "simulate",
    "simulate_impc",
    "simulate_mpc",
    "stable_substeps",
    "LatencyStats",
    "LatencyReport",
    "benchmark_latency",
    "TrackingMetrics",
    "tracking_metrics",
]

CONTROLLERS = ("impc", "impc_projected", "impc_gamma", "baseline_mpc")

# RK4's stability interval on the negative real axis ends near -2.785
_RK4_SAFE = 2.5


@dataclass
class SimConfig:
    """
    Simulation settings.

    ``x0`` is in original coordinates and defaults to the origin. ``z0``,
    ``mu0`` and ``lam0`` default to zero. ``substeps`` splits each step of
    length ``h`` into equal RK4 substeps for the continuous controllers;
    ``None`` picks the smallest count that keeps RK4 stable on the
    linearized closed loop.
    """

    T: float = 5.0
    h: float = 1e-3
    controller: str = "impc"
    x0: Optional[np.ndarray] = None
    z0: Optional[np.ndarray] = None
    mu0: Optional[np.ndarray] = None
    lam0: Optional[np.ndarray] = None
    sample_period: Optional[float] = None
    log_stride: int = 10
    substeps: Optional[int] = None
    divergence_bound: float = 1e6
    record_signals: bool = False

    def validate(self, prob):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        sample = prob.dt if self.sample_period is None else self.sample_period
        if not 0 < self.h <= sample:
            raise ValueError("need 0 < h <= sample period")
        if self.log_stride < 1:
            raise ValueError("log_stride must be at least 1")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        return self


@dataclass
class SimLog:
    """
    Logged closed-loop trajectory, one row per logged instant.

    ``x`` and ``u`` are in original coordinates; ``x_shifted``, ``z``,
    ``mu`` and ``lam`` are the raw simulation states. ``eq_feas`` is
    ``||H z + V x~||_inf`` for the plan the controller acts on. ``storage``
    holds the series of :func:`impc.certify.storage_series`.
    """

    controller: str
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_shifted: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    eq_feas: np.ndarray
    storage: dict
    latencies: np.ndarray
    substeps: int = 1
    signals: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def norm_z(self):
        return np.linalg.norm(self.z, axis=1)

    @property
    def norm_mu(self):
        return np.linalg.norm(self.mu, axis=1)

    @property
    def norm_lam(self):
        return np.linalg.norm(self.lam, axis=1)


def _default_inputs(plant, prob, params):
    alpha = params.alpha if params is not None else 1.0
    beta = params.beta if params is not None else 0.0
    return CertificateInputs(QSRTriple.from_plant(plant), prob, alpha, beta, delta=1.0)


def _initial_controller(prob, config):
    def vec(v, size):
        return np.zeros(size) if v is None else np.array(v, dtype=float).reshape(size)

    state = ControllerState(vec(config.z0, prob.nz), vec(config.mu0, prob.n_ineq),
                            vec(config.lam0, prob.n_eq))
    if np.any(state.mu < 0):
        raise ValueError("initial inequality multipliers must be nonnegative")
    return state


def _closed_loop(plant, prob, params, controller):
    """Vector field of the shifted plant plus controller on ``y = [x~, z, mu, lam]``."""
    n = plant.n
    A_c, B_c = plant.A_c, plant.B_c
    ctrl_rhs = gamma_flow_rhs if controller == "impc_gamma" else flow_rhs
    projected = controller == "impc_projected"

    def rhs(_t, y):
        x = y[:n]
        state = ControllerState.unpack(prob, y[n:])
        z = project_equality(state.z, x, prob) if projected else state.z
        dx = A_c @ x + B_c @ (prob.E @ z)
        return np.concatenate([dx, *ctrl_rhs(state, x, prob, params)])

    return rhs


def stable_substeps(plant, prob, params, controller, h):
    """
    Smallest RK4 substep count that is stable on the linearized closed loop.

    The Jacobian is assembled column by column from the vector field (the
    loop is linear away from the inequality projection), and the substep
    is chosen so that ``h_sub * spectral_radius <= 2.5``.
    """
    rhs = _closed_loop(plant, prob, params, controller)
    dim = plant.n + prob.nz + prob.n_ineq + prob.n_eq
    base = rhs(0.0, np.zeros(dim))
    J = np.empty((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        J[:, i] = rhs(0.0, e) - base
    radius = float(np.abs(np.linalg.eigvals(J)).max(initial=0.0))
    return max(1, int(math.ceil(h * radius / _RK4_SAFE)))


def _n_steps(T, h):
    k = int(round(T / h))
    if k < 1 or abs(k * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of h={h}")
    return k


def _finish_log(controller, plant, prob, shift, inputs, t, Y, u_shifted, feas, lat, substeps,
                signals, meta):
    n, nz, nq = plant.n, prob.nz, prob.n_ineq
    Y = np.array(Y)
    xs = Y[:, :n]
    z = Y[:, n:n + nz]
    mu = Y[:, n + nz:n + nz + nq]
    lam = Y[:, n + nz + nq:]
    storage = storage_series(xs, z, mu, lam, inputs)
    return SimLog(
        controller=controller, times=np.array(t), x=xs + shift.r,
        u=np.array(u_shifted).reshape(len(t), -1) + shift.u_r, x_shifted=xs, z=z, mu=mu,
        lam=lam, eq_feas=np.array(feas), storage=storage, latencies=np.array(lat),
        substeps=substeps, signals={k: np.array(v) for k, v in signals.items()}, meta=meta)


def simulate_impc(plant, prob, params, shift=None, config=None, inputs=None):
    """
    Continuous closed loop of the plant and a primal-dual flow controller.

    The plant state is fed to the controller at every RK4 stage and the
    input ``u = E z`` (``E z_proj`` for the projected variant) acts on the
    plant at every stage. Inequality multipliers are clamped to be
    nonnegative after each substep.

    Parameters
    ----------
    plant : LinearPlant
    prob : MpcProblem
    params : FlowParams
    shift : TrackingShift, optional
        Defaults to regulation to the origin.
    config : SimConfig, optional
    inputs : CertificateInputs, optional
        Used for the logged storage and supply-rate series. Defaults to the
        exact identity-storage supply rate of the plant with ``delta = 1``.

    Returns
    -------
    SimLog

    Raises
    ------
    DivergenceError
        If ``||x~||`` exceeds ``config.divergence_bound``.
    IntegrationError
        On non-finite states.
    """
    config = (config or SimConfig()).validate(prob)
    if config.controller == "baseline_mpc":
        raise ValueError("use simulate_mpc for the baseline controller")
    shift = shift or TrackingShift.none(plant)
    inputs = inputs or _default_inputs(plant, prob, params)
    n, nz, nq = plant.n, prob.nz, prob.n_ineq
    ctrl = config.controller
    projected = ctrl == "impc_projected"

    x0 = np.zeros(n) if config.x0 is None else np.asarray(config.x0, dtype=float)
    y = np.concatenate([x0 - shift.r, _initial_controller(prob, config).pack()])
    rhs = _closed_loop(plant, prob, params, ctrl)
    substeps = config.substeps or stable_substeps(plant, prob, params, ctrl, config.h)
    hs = config.h / substeps
    steps = _n_steps(config.T, config.h)
    mu_sl = slice(n + nz, n + nz + nq)

    t_log, Y, U, feas, lat = [], [], [], [], []
    signals = {"xi": [], "eta": [], "e": []} if config.record_signals else {}

    def record(t, y):
        x = y[:n]
        state = ControllerState.unpack(prob, y[n:])
        zc = project_equality(state.z, x, prob) if projected else state.z
        t_log.append(t)
        Y.append(y.copy())
        U.append(prob.E @ zc)
        feas.append(float(np.abs(prob.H @ zc + prob.V @ x).max(initial=0.0)))
        if signals:
            sig = flow_signals(state, x, prob, params)
            for k in signals:
                signals[k].append(sig[k])

    record(0.0, y)
    t = 0.0
    for k in range(1, steps + 1):
        tic = time.perf_counter()
        for _ in range(substeps):
            y = numerics.rk4_step(rhs, t, y, hs)
            if nq:
                y[mu_sl] = np.maximum(y[mu_sl], 0.0)
            t += hs
        lat.append(time.perf_counter() - tic)
        t = k * config.h
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite closed-loop state at t={t:.6g}")
        if k % config.log_stride == 0 or k == steps:
            record(t, y)
        if np.linalg.norm(y[:n]) > config.divergence_bound:
            record(t, y)
            log = _finish_log(ctrl, plant, prob, shift, inputs, t_log, Y, U, feas, lat,
                              substeps, signals, {"diverged": True})
            raise DivergenceError(f"closed loop diverged at t={t:.6g}", log=log)

    meta = {"alpha": params.alpha, "beta": params.beta, "gamma": params.gamma,
            "h": config.h, "T": config.T, "diverged": False}
    return _finish_log(ctrl, plant, prob, shift, inputs, t_log, Y, U, feas, lat, substeps,
                       signals, meta)


def simulate_mpc(plant, prob, shift=None, config=None, inputs=None):
    """
    Sampled-data loop with the baseline MPC and a zero-order hold.

    At every sample instant the QP is solved for the current plant state
    and the first planned input is held until the next sample; the plant
    is integrated with RK4 at step ``config.h`` in between. The logged
    ``z`` and ``lam`` are the most recent QP solution.
    """
    config = config or SimConfig(controller="baseline_mpc")
    if config.controller != "baseline_mpc":
        config = SimConfig(**{**config.__dict__, "controller": "baseline_mpc"})
    config.validate(prob)
    shift = shift or TrackingShift.none(plant)
    inputs = inputs or _default_inputs(plant, prob, None)
    n = plant.n
    A_c, B_c = plant.A_c, plant.B_c
    period = prob.dt if config.sample_period is None else config.sample_period
    per_sample = _n_steps(period, config.h)
    steps = _n_steps(config.T, config.h)

    x0 = np.zeros(n) if config.x0 is None else np.asarray(config.x0, dtype=float)
    x = x0 - shift.r
    z = np.zeros(prob.nz)
    lam = np.zeros(prob.n_eq)
    x_sample = x.copy()
    u = np.zeros(plant.m)

    t_log, Y, U, feas, lat = [], [], [], [], []

    def record(t):
        t_log.append(t)
        Y.append(np.concatenate([x, z, lam]))
        U.append(u.copy())
        feas.append(float(np.abs(prob.H @ z + prob.V @ x_sample).max(initial=0.0)))

    def plant_rhs(_t, xx):
        return A_c @ xx + B_c @ u

    for k in range(steps + 1):
        if k % per_sample == 0 and k < steps:
            tic = time.perf_counter()
            z, lam = solve_equality_qp(prob, x)
            lat.append(time.perf_counter() - tic)
            u = prob.E @ z
            x_sample = x.copy()
        if k % config.log_stride == 0 or k == steps:
            record(k * config.h)
        if k == steps:
            break
        x = numerics.rk4_step(plant_rhs, k * config.h, x, config.h)
        if np.linalg.norm(x) > config.divergence_bound:
            raise DivergenceError(f"closed loop diverged at t={(k + 1) * config.h:.6g}")

    meta = {"h": config.h, "T": config.T, "sample_period": period, "diverged": False}
    return _finish_log("baseline_mpc", plant, prob, shift, inputs, t_log, Y, U, feas, lat, 1,
                       {}, meta)


def simulate(plant, prob, shift=None, config=None, params=None, inputs=None):
    """Dispatch on ``config.controller``."""
    config = config or SimConfig()
    if config.controller == "baseline_mpc":
        return simulate_mpc(plant, prob, shift, config, inputs)
    if params is None:
        raise ValueError("flow parameters are required for iMPC controllers")
    return simulate_impc(plant, prob, params, shift, config, inputs)


@dataclass(frozen=True)
class LatencyStats:
    samples: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def median(self):
        return float(np.median(self.samples))

    @property
    def p95(self):
        return float(np.percentile(self.samples, 95))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class LatencyReport:
    """
    Per-decision wall-clock latencies.

    ``baseline`` times :func:`impc.baseline.solve_equality_qp` (assemble and
    factor the KKT matrix with the package's LU). ``impc`` times one
    controller vector-field evaluation plus one RK4 controller step.
    ``lapack_reference`` times the same KKT solve with numpy's LAPACK
    ``solve``, to show how much of the gap comes from the solver kernel.
    """

    baseline: LatencyStats
    impc: LatencyStats
    lapack_reference: LatencyStats

    @property
    def ratio(self):
        return self.baseline.mean / self.impc.mean

    @property
    def lapack_ratio(self):
        return self.lapack_reference.mean / self.impc.mean


def benchmark_latency(plant, prob, params, repetitions=1000, x=None, h=1e-3, warmup=10):
    """
    Time one control decision of the baseline MPC and of the iMPC flow.

    The iMPC controller is stepped forward between repetitions (plant state
    frozen) so the timings are taken along a real transient.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    x = np.ones(plant.n) if x is None else np.asarray(x, dtype=float)

    def timed(fn, reps):
        for _ in range(warmup):
            fn()
        out = np.empty(reps)
        for i in range(reps):
            tic = time.perf_counter()
            fn()
            out[i] = time.perf_counter() - tic
        return out

    base = timed(lambda: solve_equality_qp(prob, x), repetitions)

    rhs_b = np.concatenate([np.zeros(prob.nz), -(prob.V @ x)])
    lapack = timed(lambda: np.linalg.solve(kkt_matrix(prob), rhs_b), repetitions)

    nz, nq = prob.nz, prob.n_ineq
    holder = {"y": ControllerState.zeros(prob).pack()}

    def f(_t, y):
        return np.concatenate(flow_rhs(ControllerState.unpack(prob, y), x, prob, params))

    def decide():
        y = holder["y"]
        f(0.0, y)
        y = numerics.rk4_step(f, 0.0, y, h)
        if nq:
            y[nz:nz + nq] = np.maximum(y[nz:nz + nq], 0.0)
        holder["y"] = y
        return prob.E @ y[:nz]

    flow = timed(decide, repetitions)
    return LatencyReport(LatencyStats(base), LatencyStats(flow), LatencyStats(lapack))


@dataclass(frozen=True)
class TrackingMetrics:
    ise: float
    final_error: float
    settling_time: float


def tracking_metrics(log, r, band=0.02):
    """
    Integral squared error, final relative error and 2% settling time.

    ``settling_time`` is the first logged time after which the relative
    error stays within ``band``; ``inf`` if the log never settles.
    """
    if len(log.times) == 0:
        raise ValueError("empty simulation log")
    r = np.asarray(r, dtype=float)
    t = np.asarray(log.times)
    err = np.linalg.norm(log.x - r, axis=1)
    sq = err ** 2
    ise = float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t))) if len(t) > 1 else 0.0
    scale = np.linalg.norm(r)
    rel = err / scale if scale > 0 else err
    outside = np.nonzero(rel > band)[0]
    if outside.size == 0:
        settle = float(t[0])
    elif outside[-1] == len(t) - 1:
        settle = math.inf
    else:
        settle = float(t[outside[-1] + 1])
    return TrackingMetrics(ise, float(rel[-1]), settle)

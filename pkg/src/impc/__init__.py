"""Instant MPC: a primal-dual gradient flow running as a dynamic feedback controller."""

from .baseline import mpc_step, solve_equality_qp
from .certify import (CertificateInputs, build_Q_all, check_negative_definite,
                      dissipation_monitor, search_delta, storage_report)
from .flow import (ControllerState, FlowParams, control_output, flow_rhs, gamma_flow_rhs,
                   project_equality, residual_flow_equilibrium, residual_kkt)
from .problem import (LinearPlant, MpcProblem, QSRTriple, TrackingShift, build_problem,
                      discretize, shift_to_regulation)
from .sim import (SimConfig, SimLog, benchmark_latency, simulate, simulate_impc, simulate_mpc,
                  tracking_metrics)

__version__ = "0.1.0"

"""
Tracking a DC motor reference with instant MPC
===============================================

The same plant is driven to the reference by three controllers: the
conventional MPC that solves a QP every 0.1 s, and two primal-dual flows
that run continuously next to the plant.
"""

import numpy as np

from impc import FlowParams, SimConfig, simulate, tracking_metrics
from impc.presets import Experiment, get_preset

# the preset carries the plant, the horizon-30 problem and the reference
ex = Experiment(get_preset("dc-motor"))
print("reference r =", ex.shift.r, " steady input u_r =", ex.shift.u_r)

cases = {
    "mpc": ("baseline_mpc", None),
    "impc (10, 10)": ("impc", FlowParams(10.0, 10.0)),
    "impc (10, 1000)": ("impc", FlowParams(10.0, 1000.0)),
}

logs = {}
for name, (controller, params) in cases.items():
    cfg = SimConfig(T=5.0, h=1e-3, controller=controller)
    logs[name] = simulate(ex.plant, ex.prob, ex.shift, cfg, params)

# ISE, final relative error and 2% settling time for each run
print(f"{'case':<18}{'ISE':>10}{'final err':>12}{'settle [s]':>12}")
for name, log in logs.items():
    m = tracking_metrics(log, ex.shift.r)
    print(f"{name:<18}{m.ise:>10.4g}{m.final_error:>12.2e}{m.settling_time:>12.3g}")

# a large beta makes the flow hug the MPC trajectory, except right after the step
gap = np.linalg.norm(logs["impc (10, 1000)"].x - logs["mpc"].x, axis=1)
print("largest state gap to MPC: %.3g (at t = %.2f s)" % (gap.max(), logs["mpc"].times[gap.argmax()]))
print("gap after t = 1 s: %.3g" % gap[logs["mpc"].times >= 1.0].max())

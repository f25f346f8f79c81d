"""
Cost of one control decision
============================

The baseline assembles and factors a 150 x 150 KKT system per sample. The
flow needs one right-hand-side evaluation and one RK4 step.
"""

from impc import FlowParams, benchmark_latency
from impc.presets import Experiment, get_preset

ex = Experiment(get_preset("dc-motor"))
rep = benchmark_latency(ex.plant, ex.prob, FlowParams(10.0, 10.0), repetitions=300,
                        x=-ex.shift.r)

for name, st in [("baseline (own LU)", rep.baseline), ("iMPC step", rep.impc),
                 ("baseline (LAPACK)", rep.lapack_reference)]:
    print(f"{name:<20} mean {1e3 * st.mean:7.3f} ms   p95 {1e3 * st.p95:7.3f} ms")

# most of the gap is the solver kernel; with LAPACK the QP is far cheaper
print("ratio baseline / iMPC: %.1f" % rep.ratio)
print("ratio LAPACK / iMPC:   %.1f" % rep.lapack_ratio)

"""
Checking the stability certificate before running anything
============================================================

The closed loop is certified when the composite matrix Q_all is negative
definite. The check only needs the plant, the MPC problem and (alpha, beta).
"""

from impc import CertificateInputs, build_Q_all, check_negative_definite, search_delta
from impc.presets import Experiment, get_preset

ex = Experiment(get_preset("dc-motor"))

for beta in (10.0, 1000.0):
    inputs = CertificateInputs(ex.qsr, ex.prob, alpha=10.0, beta=beta, delta=1.0)
    for mode in ("theorem", "proof"):
        ok, top = check_negative_definite(build_Q_all(inputs, mode))
        print(f"beta={beta:<6g} {mode:<8} max eig {top:10.4g}  certified: {ok}")

    # delta is free in the certificate, so scan it
    found = search_delta(inputs)
    print(f"  best delta {found.best_delta:.3g} gives max eig {found.max_eigenvalue:.4g}")

# the proof coefficient is more conservative: it needs a different delta
inputs = CertificateInputs(ex.qsr, ex.prob, alpha=10.0, beta=10.0, coefficient_mode="proof")
found = search_delta(inputs)
print("proof coefficient, (10, 10): certified =", found.certified, "at delta =", found.delta)

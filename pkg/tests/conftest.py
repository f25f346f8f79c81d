import math

import numpy as np
import pytest

from impc.presets import Experiment, get_preset
from impc.problem import LinearPlant, build_problem


def taylor_expm(M, terms=30):
    """Brute-force truncated Taylor series of the matrix exponential."""
    M = np.asarray(M, dtype=float)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def rollout(A, B, x0, inputs):
    """Stack [u(t), ..., u(t,N-1), x(t,1), ..., x(t,N)] by simulating the recursion."""
    xs = []
    x = np.asarray(x0, dtype=float)
    for u in inputs:
        x = A @ x + B @ np.atleast_1d(u)
        xs.append(x)
    return np.concatenate([np.concatenate([np.atleast_1d(u) for u in inputs])] + xs)


@pytest.fixture(scope="session")
def dc():
    return Experiment(get_preset("dc-motor"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, n=2, m=1, N=3, n_ineq=0):
    A_c = rng.normal(size=(n, n)) - 2.0 * np.eye(n)
    B_c = rng.normal(size=(n, m))
    plant = LinearPlant(A_c, B_c)
    nz = (m + n) * N
    G = rng.normal(size=(n_ineq, nz)) if n_ineq else None
    g0 = -np.abs(rng.normal(size=n_ineq)) if n_ineq else None
    return plant, build_problem(plant, N, 0.1, 1.0, 3.0, G=G, g0=g0)


__all__ = ["taylor_expm", "rollout", "random_problem", "math"]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

"""
Dense linear-algebra and integration kernels.

Everything here works on small dense numpy arrays (a few hundred rows at
most). The routines are pure functions: inputs are never modified.
"""

import math

import numpy as np

from .errors import DimensionError, IntegrationError, NonFiniteError, SingularMatrixError

__all__ = [
    "lu_factor",
    "lu_solve_factored",
    "lu_solve",
    "lu_rank",
    "sym_eig_extremes",
    "jacobi_eigenvalues",
    "expm",
    "rk4_step",
]

#: Relative pivot threshold below which a matrix is declared singular.
PIVOT_TOL = 1e-12


def _check_finite(M, what="matrix"):
    if not np.all(np.isfinite(M)):
        raise NonFiniteError(f"{what} has non-finite entries")


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def lu_factor(M):
    """
    LU factorization with partial (row) pivoting.

    Parameters
    ----------
    M : (n, n) array_like
        Square matrix.

    Returns
    -------
    lu : ndarray
        Packed factors: strict lower triangle holds L (unit diagonal
        implied), upper triangle holds U.
    perm : ndarray of int
        Row permutation, ``M[perm] = L @ U``.

    Raises
    ------
    SingularMatrixError
        If a pivot magnitude is at most ``1e-12 * ||M||_inf``.
    """
    M = _as_square(M)
    _check_finite(M)
    n = M.shape[0]
    lu = M.copy()
    perm = np.arange(n)
    tol = PIVOT_TOL * np.abs(M).sum(axis=1).max(initial=0.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= tol:
            raise SingularMatrixError(
                f"matrix is singular to working precision (pivot {lu[p, k]:.3g} at column {k})")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        if k + 1 < n:
            lu[k + 1:, k] /= lu[k, k]
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve_factored(factors, b):
    """Solve ``M y = b`` given ``factors = lu_factor(M)``.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    lu, perm = factors
    b = np.asarray(b, dtype=float)
    n = lu.shape[0]
    if b.shape[0] != n:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, matrix has {n}")
    y = b[perm].copy()
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def lu_solve(M, b):
    """
    Solve the square system ``M y = b`` by partial-pivot LU.

    Examples
    --------
    >>> lu_solve([[0.0, 1.0], [1.0, 0.0]], [5.0, 7.0])
    array([7., 5.])
    """
    b = np.asarray(b, dtype=float)
    _check_finite(b, "right-hand side")
    return lu_solve_factored(lu_factor(M), b)


def lu_rank(M, rtol=1e-10):
    """Numerical rank by Gaussian elimination with complete pivoting."""
    U = np.array(M, dtype=float)
    _check_finite(U)
    if U.size == 0:
        return 0
    rows, cols = U.shape
    tol = rtol * np.abs(U).max()
    rank = 0
    for k in range(min(rows, cols)):
        sub = np.abs(U[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= tol:
            break
        i += k
        j += k
        U[[k, i]] = U[[i, k]]
        U[:, [k, j]] = U[:, [j, k]]
        U[k + 1:, k:] -= np.outer(U[k + 1:, k] / U[k, k], U[k, k:])
        rank += 1
    return rank


def jacobi_eigenvalues(S, tol=1e-14, max_sweeps=100):
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Slow in Python for large matrices (one rotation per off-diagonal pair
    per sweep) but entirely self-contained.

    Returns
    -------
    ndarray
        Eigenvalues in ascending order.
    """
    A = _as_square(S)
    _check_finite(A)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        return np.sort(np.diag(A).copy())
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A ** 2) - np.sum(np.diag(A) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
    return np.sort(np.diag(A).copy())


def sym_eig_extremes(S, method="lapack"):
    """
    Smallest and largest eigenvalue of a symmetric matrix.

    The input is symmetrized, ``(S + S.T) / 2``, before the eigenvalue
    computation, so only the symmetric part matters.

    Parameters
    ----------
    S : (n, n) array_like
        Symmetric (or nearly symmetric) real matrix.
    method : {"lapack", "jacobi"}
        ``"lapack"`` uses the symmetric tridiagonal QR solver shipped with
        numpy; ``"jacobi"`` uses :func:`jacobi_eigenvalues`.

    Returns
    -------
    (float, float)
        ``(min eigenvalue, max eigenvalue)``.
    """
    S = _as_square(S)
    _check_finite(S)
    S = 0.5 * (S + S.T)
    if method == "lapack":
        ev = np.linalg.eigvalsh(S)
    elif method == "jacobi":
        ev = jacobi_eigenvalues(S)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(ev[0]), float(ev[-1])


# Pade [6/6] numerator coefficients for exp.
_PADE6 = [math.factorial(12 - k) * math.factorial(6)
          / (math.factorial(12) * math.factorial(k) * math.factorial(6 - k))
          for k in range(7)]


def expm(M):
    """
    Matrix exponential by scaling and squaring with a [6/6] Pade core.

    The matrix is scaled by ``2**-s`` so that its infinity norm is at most
    1/2, where the diagonal Pade approximant is accurate to roundoff, and
    the result is squared ``s`` times.
    """
    M = _as_square(M)
    _check_finite(M)
    n = M.shape[0]
    norm = np.abs(M).sum(axis=1).max(initial=0.0)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / 2.0 ** s
    num = _PADE6[0] * np.eye(n)
    den = _PADE6[0] * np.eye(n)
    P = np.eye(n)
    for k in range(1, 7):
        P = P @ X
        num += _PADE6[k] * P
        den += (-1) ** k * _PADE6[k] * P
    R = lu_solve(den, num)
    for _ in range(s):
        R = R @ R
    _check_finite(R, "matrix exponential")
    return R


def rk4_step(rhs, t, y, h):
    """
    One classical Runge-Kutta step for ``dy/dt = rhs(t, y)``.

    Raises
    ------
    IntegrationError
        If any stage evaluation is non-finite.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationError(f"non-finite vector field near t={t:.6g}")
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

"""Dense linear algebra for the small fixed-size matrices of the model.

Everything here is for 2x2 study-level and 5x5 parameter-space matrices:
LU with partial pivoting, determinant, inverse, solve, and the trace of a
matrix chain.
"""
from __future__ import annotations

import numpy as np

MAX_DIM = 8
SINGULAR_GUARD = 1e-300


class SingularMatrixError(ValueError):
    """Raised when a matrix is numerically singular."""

    def __init__(self, det: float):
        super().__init__(f"singular matrix (determinant {det:.6g})")
        self.det = det


def _as_square(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValueError(f"matrix dimension {a.shape[0]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def lu_decompose(m):
    """Return ``(lu, perm, sign)`` with ``P m = L U`` packed into ``lu``.

    ``perm[i]`` is the original row placed at position i and ``sign`` is the
    permutation parity. A zero pivot is left in place; callers decide.
    """
    a = _as_square(m)
    n = a.shape[0]
    perm = np.arange(n)
    sign = 1.0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            perm[[col, pivot]] = perm[[pivot, col]]
            sign = -sign
        if a[col, col] == 0.0:
            continue
        for row in range(col + 1, n):
            a[row, col] /= a[col, col]
            a[row, col + 1:] -= a[row, col] * a[col, col + 1:]
    return a, perm, sign


def det(m) -> float:
    lu, _, sign = lu_decompose(m)
    return float(sign * np.prod(np.diag(lu)))


def _lu_solve(lu, perm, b):
    n = lu.shape[0]
    x = np.array(b, dtype=float)[perm]
    for i in range(n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def _factor_nonsingular(m):
    lu, perm, sign = lu_decompose(m)
    d = float(sign * np.prod(np.diag(lu)))
    if not abs(d) > SINGULAR_GUARD:
        raise SingularMatrixError(d)
    return lu, perm


def solve(m, b) -> np.ndarray:
    """Solve ``m x = b`` for a vector or a matrix of right-hand sides."""
    lu, perm = _factor_nonsingular(m)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != lu.shape[0]:
        raise ValueError("right-hand side does not conform")
    if b.ndim == 1:
        return _lu_solve(lu, perm, b)
    return np.column_stack([_lu_solve(lu, perm, b[:, j]) for j in range(b.shape[1])])


def inverse(m) -> np.ndarray:
    lu, perm = _factor_nonsingular(m)
    n = lu.shape[0]
    return np.column_stack([_lu_solve(lu, perm, e) for e in np.eye(n)])


def solve_symmetric(m, b) -> np.ndarray:
    """``solve`` for a matrix that must be symmetric (checked to 1e-9 relative)."""
    a = _as_square(m)
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    return solve(a, b)


def trace_prod(*mats) -> float:
    """Trace of the left-to-right product of ``mats``.

    The last factor is folded in as a row-wise dot product, so the full
    product is never formed.
    """
    if not mats:
        raise ValueError("trace_prod needs at least one matrix")
    arrs = [np.asarray(m, dtype=float) for m in mats]
    for a, b in zip(arrs, arrs[1:]):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError("matrix chain does not conform")
    if arrs[0].shape[0] != arrs[-1].shape[1]:
        raise ValueError("matrix chain product is not square")
    if len(arrs) == 1:
        return float(np.trace(arrs[0]))
    left = arrs[0]
    for a in arrs[1:-1]:
        left = left @ a
    return float(np.sum(left * arrs[-1].T))

"""Small dense matrix helpers for the filter recursions.

Everything here operates on float64 numpy arrays: vectors are 1-D of
length n, matrices are (n, m). The filters only ever see tiny systems
(1x1 for per-VM control, 2x2 for joint web/db control, n <= 8 by
design), so the inverse is a direct Gauss-Jordan elimination with
partial pivoting rather than a decomposition from a BLAS library.
Covariance entries are in percentage-points^2, which keeps pivots far
above the singularity tolerance in any sane configuration.
"""

from __future__ import annotations

import numpy as np

# Pivots below this are treated as singular. Covariances live in
# pp^2 units and stay orders of magnitude above it.
PIVOT_TOL = 1e-12

# Leading-principal-minor threshold for positive definiteness.
PD_TOL = 1e-12


class SingularMatrixError(ArithmeticError):
    """Raised when elimination hits a pivot below tolerance."""

    def __init__(self, pivot: float):
        self.pivot = float(pivot)
        super().__init__(f"matrix is singular or near-singular (pivot magnitude {pivot:.3e})")


def as_matrix(a) -> np.ndarray:
    if isinstance(a, np.ndarray) and a.ndim == 2 and a.dtype == np.float64:
        return a
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def as_vector(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if n is not None and x.shape[0] != n:
        raise ValueError(f"expected a vector of length {n}, got {x.shape[0]}")
    return x


def identity(n: int) -> np.ndarray:
    return np.eye(n)


def mat_mul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})")
    return a @ b


def mat_inv(a) -> np.ndarray:
    """Invert a square matrix by Gauss-Jordan with partial pivoting.

    Closed forms handle the 1x1 and 2x2 cases that dominate runtime;
    both report the same pivot magnitudes elimination would produce.
    Raises SingularMatrixError when a pivot falls below PIVOT_TOL.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"cannot invert a non-square {n}x{m} matrix")

    if n == 1:
        v = a.item(0)
        if abs(v) <= PIVOT_TOL:
            raise SingularMatrixError(abs(v))
        return np.array([[1.0 / v]])

    if n == 2:
        a00, a01, a10, a11 = a.item(0), a.item(1), a.item(2), a.item(3)
        p1 = max(abs(a00), abs(a10))
        if p1 <= PIVOT_TOL:
            raise SingularMatrixError(p1)
        det = a00 * a11 - a01 * a10
        # second elimination pivot equals |det| / first pivot
        p2 = abs(det) / p1
        if p2 <= PIVOT_TOL:
            raise SingularMatrixError(p2)
        return np.array(((a11 / det, -a01 / det), (-a10 / det, a00 / det)))

    aug = np.hstack([a.copy(), np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = abs(aug[pivot_row, col])
        if pivot <= PIVOT_TOL:
            raise SingularMatrixError(pivot)
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col and aug[row, col] != 0.0:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def symmetrize(a) -> np.ndarray:
    """0.5 * (A + A^T), cancelling round-off drift in covariances."""
    a = as_matrix(a)
    return 0.5 * (a + a.T)


def is_positive_definite(a, tol: float = PD_TOL) -> bool:
    """True iff the symmetric part has all leading principal minors > tol."""
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"positive definiteness is undefined for a {n}x{m} matrix")
    s = symmetrize(a)
    if n == 1:
        return s[0, 0] > tol
    if n == 2:
        return s[0, 0] > tol and (s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]) > tol
    for k in range(1, n + 1):
        if np.linalg.det(s[:k, :k]) <= tol:
            return False
    return True


def weighted_sq_norm(x, m) -> float:
    """x^T M x, the squared M-weighted norm (>= 0 for PSD M)."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"weight matrix must be square, got {m.shape[0]}x{m.shape[1]}")
    x = as_vector(x, m.shape[0])
    return float(x @ m @ x)

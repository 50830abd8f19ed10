"""Dense linear algebra for positive-definite scale matrices.

The Cholesky factor is used throughout as the matrix square root of a scale
matrix. Any square root with positive determinant is admissible for the
location-scale parameterization, and the lower-triangular one is the cheapest.
"""

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "NotPositiveDefinite",
    "DimensionMismatch",
    "symmetrize",
    "cholesky",
    "log_det",
    "tri_solve",
    "is_lower_factor",
]

ASYMMETRY_TOL = 1e-12


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a scale matrix fails the Cholesky pivot test."""


class DimensionMismatch(ValueError):
    pass


def symmetrize(m):
    """Return ``(m + m.T) / 2`` after checking the asymmetry is only float drift."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale > 0 and np.max(np.abs(m - m.T)) > ASYMMETRY_TOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric")
    return 0.5 * (m + m.T)


def cholesky(m):
    """Lower-triangular ``L`` with ``L @ L.T == m`` and strictly positive diagonal.

    Raises
    ------
    NotPositiveDefinite
        If ``m`` is asymmetric beyond round-off or any pivot is not positive.
    """
    m = symmetrize(m)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        l = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    if not np.all(np.diag(l) > 0):
        raise NotPositiveDefinite("matrix is not positive definite")
    return l


def log_det(l):
    """``log|L L^T|`` from a Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(l))))


def tri_solve(l, v):
    """Solve ``L x = v`` for lower-triangular ``L``; ``v`` may be a vector or a matrix of columns."""
    l = np.asarray(l, dtype=float)
    v = np.asarray(v, dtype=float)
    if l.ndim != 2 or l.shape[0] != l.shape[1] or v.shape[0] != l.shape[0]:
        raise DimensionMismatch(f"cannot solve {l.shape} system with right side {v.shape}")
    return solve_triangular(l, v, lower=True, check_finite=False)


def is_lower_factor(l):
    l = np.asarray(l)
    return (
        l.ndim == 2
        and l.shape[0] == l.shape[1]
        and np.array_equal(l, np.tril(l))
        and bool(np.all(np.diag(l) > 0))
    )

"""Dense vector/matrix helpers with strict finiteness checking.

Thin wrappers over numpy: every operation validates that no NaN/Inf enters
or leaves, since a single non-finite coordinate silently corrupts a whole
simulation trace.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def as_vector(v, size: int | None = None) -> np.ndarray:
    """Validate and return ``v`` as a finite float64 1-d array."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {a.shape}")
    if size is not None and a.shape[0] != size:
        raise ShapeError(f"expected length {size}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ShapeError("vector contains non-finite entries")
    return a


def as_matrix(m, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return ``m`` as a finite float64 2-d array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ShapeError("matrix contains non-finite entries")
    return a


def l1_norm_column(m, k: int) -> float:
    """Sum of absolute values of column ``k``."""
    a = as_matrix(m)
    if not 0 <= k < a.shape[1]:
        raise IndexError(f"column {k} out of range for {a.shape[1]} columns")
    return float(np.abs(a[:, k]).sum())


def linf_norm(v) -> float:
    """Largest absolute entry."""
    a = as_vector(v)
    return float(np.abs(a).max()) if a.size else 0.0


def l2_norm(v) -> float:
    """Euclidean norm."""
    return float(np.linalg.norm(as_vector(v)))


def matvec(m, v) -> np.ndarray:
    a = as_matrix(m)
    x = as_vector(v, size=a.shape[1])
    out = a @ x
    if not np.all(np.isfinite(out)):
        raise ShapeError("matvec produced non-finite entries")
    return out


def gram(m) -> np.ndarray:
    """The product (transpose of m) @ m."""
    a = as_matrix(m)
    out = a.T @ a
    if not np.all(np.isfinite(out)):
        raise ShapeError("gram product produced non-finite entries")
    return out


def operator_norm(m, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm (largest singular value) by power iteration on the gram.

    The start vector is deterministic and slightly tilted so it cannot be
    orthogonal to the dominant eigenvector of a symmetric PSD gram matrix
    in any systematic way; convergence is declared when the Rayleigh
    quotient stabilizes to ``tol``.
    """
    a = as_matrix(m)
    g = a.T @ a
    d = g.shape[0]
    if d == 0 or not g.any():
        return 0.0
    x = np.ones(d) + np.arange(d) / (7.0 * d)
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        y = g @ x
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        rayleigh = float(x @ (g @ x))
        if abs(rayleigh - prev) <= tol * max(1.0, rayleigh):
            prev = rayleigh
            break
        prev = rayleigh
    return float(np.sqrt(prev))

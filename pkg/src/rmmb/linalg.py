"""Dense float64 matrix helpers with strict validation.

Matrices are plain 2-D C-contiguous float64 numpy arrays throughout the
package.  Constructors reject non-finite entries up front so downstream code
never has to re-check, and shape mismatches raise :class:`ShapeError` naming
both operand shapes.
"""

from __future__ import annotations

import numpy as np

# Alias used in signatures package-wide: a 2-D float64 ndarray.
Matrix = np.ndarray


class ShapeError(ValueError):
    """Operand dimensions are incompatible for the requested operation."""


def _shape_str(a: np.ndarray) -> str:
    return "x".join(str(d) for d in a.shape)


def as_matrix(data) -> Matrix:
    """Build a validated matrix from nested sequences or an existing array.

    Raises ShapeError for non-2-D data and ValueError for empty or
    non-finite input.
    """
    arr = np.array(data, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise ShapeError(f"expected 2-D matrix data, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"matrix must have positive dimensions, got {_shape_str(arr)}")
    if not np.isfinite(arr).all():
        raise ValueError("matrix entries must be finite")
    return arr


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Product ``a @ b`` with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {_shape_str(a)} by {_shape_str(b)}: "
            f"inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def transpose(a: Matrix) -> Matrix:
    """Materialized transpose (C-contiguous copy, not a view)."""
    if a.ndim != 2:
        raise ShapeError("transpose operand must be 2-D")
    return np.ascontiguousarray(a.T)


def frobenius_norm_sq(a: Matrix) -> float:
    """Sum of squared entries."""
    flat = np.asarray(a, dtype=np.float64).ravel()
    return float(np.dot(flat, flat))


def save_csv(path, a: Matrix) -> None:
    """Write a matrix as CSV with full float64 round-trip precision."""
    if a.ndim != 2:
        raise ShapeError("save_csv expects a 2-D matrix")
    np.savetxt(path, a, fmt="%.17g", delimiter=",")


def load_csv(path) -> Matrix:
    """Read a CSV matrix written by :func:`save_csv` (or any numeric CSV)."""
    arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return as_matrix(arr)

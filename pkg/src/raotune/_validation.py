"""Input coercion shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .sparse import SparseMatrix


def as_sparse_matrix(obj) -> SparseMatrix:
    """Accept a ``SparseMatrix``, any scipy sparse matrix/array, or a dense 2-D array."""
    if isinstance(obj, SparseMatrix):
        return obj
    if sp.issparse(obj):
        return SparseMatrix.from_scipy(obj)
    arr = np.asarray(obj)
    if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.number):
        raise TypeError(f"expected a 2-D numeric matrix, got {type(obj).__name__}")
    if np.iscomplexobj(arr):
        raise TypeError("complex matrices are not supported")
    return SparseMatrix.from_dense(arr)


def check_square(matrix: SparseMatrix) -> SparseMatrix:
    if not matrix.is_square:
        raise ValueError(f"square matrix required, got {matrix.n_rows}x{matrix.n_cols}")
    if matrix.n_rows == 0:
        raise ValueError("empty matrix")
    return matrix


def check_matrices(X) -> list[SparseMatrix]:
    """A sequence of square matrices; a single matrix is rejected to avoid ambiguity."""
    if isinstance(X, SparseMatrix) or sp.issparse(X) or (
            isinstance(X, np.ndarray) and X.ndim == 2):
        raise TypeError("expected a sequence of matrices, got a single matrix")
    return [check_square(as_sparse_matrix(m)) for m in X]

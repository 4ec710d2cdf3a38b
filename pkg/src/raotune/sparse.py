"""Compressed sparse column matrices, Matrix Market I/O and matrix features."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseMatrix",
    "MatrixFeatures",
    "MatrixMarketError",
    "from_coo",
    "parse_matrix_market",
    "read_matrix_market",
    "write_matrix_market",
    "density",
    "extract_features",
    "at_plus_a_pattern",
    "ata_pattern",
    "is_permutation",
    "check_permutation",
]


class MatrixMarketError(ValueError):
    """Raised for unreadable Matrix Market input; carries the offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Numeric matrix in canonical compressed sparse column form.

    Row indices are strictly increasing inside each column and no (row, col)
    pair is stored twice. Explicit zeros are allowed and count toward ``nnz``.
    The index and value arrays are read-only.
    """

    n_rows: int
    n_cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "col_ptr", _frozen(self.col_ptr, np.int64))
        object.__setattr__(self, "row_idx", _frozen(self.row_idx, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        self._validate()

    def _validate(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        cp, ri = self.col_ptr, self.row_idx
        if cp.shape != (self.n_cols + 1,):
            raise ValueError("col_ptr must have length n_cols + 1")
        if cp[0] != 0 or cp[-1] != ri.size or ri.size != self.values.size:
            raise ValueError("col_ptr does not match the stored entry count")
        if np.any(np.diff(cp) < 0):
            raise ValueError("col_ptr must be non-decreasing")
        if ri.size:
            if ri.min() < 0 or ri.max() >= self.n_rows:
                raise ValueError("row index out of range")
            # strictly increasing within a column <=> every step inside a column is positive
            steps = np.diff(ri)
            starts = np.zeros(ri.size, dtype=bool)
            starts[cp[:-1][np.diff(cp) > 0]] = True
            if np.any(steps[~starts[1:]] <= 0):
                raise ValueError("row indices must be strictly increasing within each column")

    @property
    def nnz(self) -> int:
        return int(self.row_idx.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def is_square(self) -> bool:
        return self.n_rows == self.n_cols

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def col_indices(self) -> np.ndarray:
        """Column index of every stored entry, aligned with ``row_idx``."""
        return np.repeat(np.arange(self.n_cols, dtype=np.int64), np.diff(self.col_ptr))

    def transpose(self) -> "SparseMatrix":
        return from_coo(self.n_cols, self.n_rows, self.col_indices(), self.row_idx, self.values)

    def permute(self, row_perm=None, col_perm=None) -> "SparseMatrix":
        """Return ``A[row_perm][:, col_perm]`` where ``perm[k]`` is the original index at k."""
        rows, cols = self.row_idx, self.col_indices()
        if row_perm is not None:
            rows = inverse_permutation(check_permutation(row_perm, self.n_rows))[rows]
        if col_perm is not None:
            cols = inverse_permutation(check_permutation(col_perm, self.n_cols))[cols]
        return from_coo(self.n_rows, self.n_cols, rows, cols, self.values)

    def pattern(self) -> "SparseMatrix":
        return SparseMatrix(self.n_rows, self.n_cols, self.col_ptr, self.row_idx,
                            np.ones(self.nnz))

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"vector of length {self.n_cols} expected, got {x.shape}")
        y = np.zeros(self.n_rows)
        np.add.at(y, self.row_idx, self.values * x[self.col_indices()])
        return y

    def toarray(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.row_idx, self.col_indices()] = self.values
        return dense

    def to_scipy(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.values, self.row_idx, self.col_ptr), shape=self.shape)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        coo = sp.coo_matrix(m)
        return from_coo(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    @classmethod
    def from_dense(cls, a, keep_zeros: bool = False) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("2-D array expected")
        rows, cols = np.nonzero(np.ones_like(a, dtype=bool) if keep_zeros else a)
        return from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return from_coo(n, n, idx, idx, np.ones(n))

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def from_coo(n_rows: int, n_cols: int, rows, cols, values=None) -> SparseMatrix:
    """Build a canonical CSC matrix from coordinates; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    if values is None:
        values = np.ones(rows.size)
    values = np.asarray(values, dtype=np.float64).ravel()
    if not (rows.size == cols.size == values.size):
        raise ValueError("rows, cols and values must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise ValueError("coordinate out of range")
    order = np.lexsort((rows, cols))
    rows, cols, values = rows[order], cols[order], values[order]
    if rows.size:
        first = np.ones(rows.size, dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(first)
        values = np.add.reduceat(values, starts)
        rows, cols = rows[starts], cols[starts]
    col_ptr = np.zeros(n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=n_cols), out=col_ptr[1:])
    return SparseMatrix(int(n_rows), int(n_cols), col_ptr, rows, values)


# -- Matrix Market -----------------------------------------------------------

_FIELDS = {"real", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric"}


def parse_matrix_market(stream: TextIO | Iterable[str]) -> SparseMatrix:
    """Read a coordinate-format Matrix Market stream.

    Symmetric files are expanded to general storage, pattern entries become
    1.0 and duplicate coordinates are summed. Complex, Hermitian,
    skew-symmetric and array-format files are rejected.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = iter(enumerate(stream, start=1))

    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MatrixMarketError("empty input", 1) from None
    tokens = header.split()
    if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
        raise MatrixMarketError("missing %%MatrixMarket header", lineno)
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", lineno)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r}; only coordinate", lineno)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {field!r}", lineno)
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", lineno)

    size = None
    for lineno, line in lines:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("size line must hold rows, cols and entry count", lineno)
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError("non-integer size line", lineno) from None
        if min(size) < 0:
            raise MatrixMarketError("negative size", lineno)
        break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    n_rows, n_cols, count = size
    if symmetry == "symmetric" and n_rows != n_cols:
        raise MatrixMarketError("symmetric matrix must be square", lineno)

    width = 2 if field == "pattern" else 3
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    vals = np.ones(count)
    k = 0
    for lineno, line in lines:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        if k >= count:
            raise MatrixMarketError(f"more entries than the declared {count}", lineno)
        parts = s.split()
        if len(parts) != width:
            raise MatrixMarketError(f"expected {width} fields per entry", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            if width == 3:
                vals[k] = int(parts[2]) if field == "integer" else float(parts[2])
        except ValueError:
            raise MatrixMarketError("unparsable entry", lineno) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range", lineno)
        rows[k], cols[k] = i - 1, j - 1
        k += 1
    if k != count:
        raise MatrixMarketError(f"declared {count} entries, found {k}", lineno)

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return from_coo(n_rows, n_cols, rows, cols, vals)


def read_matrix_market(path) -> SparseMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix_market(fh)


def write_matrix_market(matrix: SparseMatrix, stream, comment: str | None = None):
    """Write ``matrix`` as a general real coordinate file (values round-trip exactly).

    ``stream`` is a text stream or a path.
    """
    if not hasattr(stream, "write"):
        with open(stream, "w", encoding="utf-8") as fh:
            return write_matrix_market(matrix, fh, comment)
    stream.write("%%MatrixMarket matrix coordinate real general\n")
    if comment:
        for line in comment.splitlines():
            stream.write(f"% {line}\n")
    stream.write(f"{matrix.n_rows} {matrix.n_cols} {matrix.nnz}\n")
    for i, j, v in zip(matrix.row_idx.tolist(), matrix.col_indices().tolist(),
                       matrix.values.tolist()):
        stream.write(f"{i + 1} {j + 1} {v!r}\n")


# -- features ----------------------------------------------------------------

@dataclass(frozen=True)
class MatrixFeatures:
    n: int
    nnz: int
    density_percent: float
    avg_diag_distance: Optional[float] = None


def _require_square(matrix: SparseMatrix):
    if not matrix.is_square:
        raise ValueError(f"square matrix required, got {matrix.n_rows}x{matrix.n_cols}")


def density(matrix: SparseMatrix) -> float:
    """Percentage of stored entries: ``nnz / (n*n) * 100``."""
    _require_square(matrix)
    n = int(matrix.n_rows)
    if n < 1:
        raise ValueError("density needs n >= 1")
    # Python ints: n*n never overflows
    return matrix.nnz / (n * n) * 100


def extract_features(matrix: SparseMatrix, with_diag_distance: bool = False) -> MatrixFeatures:
    d = density(matrix)
    dist = None
    if with_diag_distance:
        n = matrix.n_rows
        if matrix.nnz:
            offsets = np.abs(matrix.row_idx - matrix.col_indices())
            dist = float(offsets.mean() / n)
        else:
            dist = 0.0
    return MatrixFeatures(n=matrix.n_rows, nnz=matrix.nnz, density_percent=d,
                          avg_diag_distance=dist)


# -- symmetrised patterns ----------------------------------------------------

def _bool_csc(matrix: SparseMatrix) -> sp.csc_matrix:
    return sp.csc_matrix((np.ones(matrix.nnz, dtype=np.int64), matrix.row_idx, matrix.col_ptr),
                         shape=matrix.shape)


def _pattern_from_scipy(m, n: int) -> SparseMatrix:
    m = sp.coo_matrix(m)
    diag = np.arange(n)
    rows = np.concatenate([m.row, diag])
    cols = np.concatenate([m.col, diag])
    pat = from_coo(n, n, rows, cols)
    return pat.pattern()


def at_plus_a_pattern(matrix: SparseMatrix) -> SparseMatrix:
    """Symmetric pattern of ``A^T + A`` with the full diagonal, values 1.0."""
    _require_square(matrix)
    b = _bool_csc(matrix)
    return _pattern_from_scipy(b + b.T, matrix.n_rows)


def ata_pattern(matrix: SparseMatrix) -> SparseMatrix:
    """Symmetric pattern of ``A^T A`` with the full diagonal, values 1.0."""
    _require_square(matrix)
    b = _bool_csc(matrix)
    return _pattern_from_scipy(b.T @ b, matrix.n_rows)


# -- permutations ------------------------------------------------------------

def is_permutation(perm, n: int) -> bool:
    p = np.asarray(perm)
    if p.shape != (n,):
        return False
    if n == 0:
        return True
    if not np.issubdtype(p.dtype, np.integer):
        return False
    return bool(np.array_equal(np.sort(p), np.arange(n)))


def check_permutation(perm, n: int) -> np.ndarray:
    if not is_permutation(perm, n):
        raise ValueError(f"not a permutation of 0..{n - 1}")
    return np.asarray(perm, dtype=np.int64)


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv

"""Left-looking sparse LU with threshold partial pivoting.

Column ``k`` of ``A[:, q]`` is obtained by a sparse triangular solve against
the columns of L computed so far. Its nonzero pattern is the set reachable
from the pattern of ``A[:, q[k]]`` in the graph of L, found by depth-first
search, which also yields a valid topological order for the numeric sweep.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .ordering import symmetric_adjacency
from .sparse import SparseMatrix, check_permutation, from_coo

__all__ = [
    "LuFactors",
    "FactorStats",
    "SingularMatrixError",
    "lu_factorize",
    "solve",
    "symbolic_fill",
]


class SingularMatrixError(ArithmeticError):
    """Factorization hit a column with no usable pivot.

    ``kind`` is ``"structural"`` (no candidate rows at all) or ``"numerical"``
    (every candidate is exactly zero); ``column`` is the elimination step.
    """

    def __init__(self, kind: str, column: int, original_column: int):
        self.kind = kind
        self.column = column
        self.original_column = original_column
        super().__init__(f"{kind}ly singular at step {column} (original column {original_column})")


@dataclass(frozen=True)
class LuFactors:
    """``P A Q^T = L U`` with ``(P A Q^T)[k, m] = A[row_perm[k], col_perm[m]]``.

    L is unit lower triangular with its diagonal stored explicitly.
    """

    L: SparseMatrix
    U: SparseMatrix
    row_perm: np.ndarray
    col_perm: np.ndarray

    @property
    def n(self) -> int:
        return self.L.n_rows


@dataclass(frozen=True)
class FactorStats:
    fill_in: int
    flops: int
    factor_time: float
    max_pivot_growth: float


def lu_factorize(matrix: SparseMatrix, col_perm, pivot_threshold: float = 1.0
                 ) -> tuple[LuFactors, FactorStats]:
    """Factor ``A[:, col_perm]`` column by column.

    The pivot is the diagonal candidate (row equal to the original column)
    when its magnitude is at least ``pivot_threshold`` times the largest
    candidate, otherwise the largest candidate, lowest row index first.

    ``flops`` counts one per loaded entry of A, one per multiply-add of the
    triangular solves and one per division when scaling L.
    """
    if not matrix.is_square:
        raise ValueError(f"square matrix required, got {matrix.n_rows}x{matrix.n_cols}")
    if not 0.0 < pivot_threshold <= 1.0:
        raise ValueError("pivot_threshold must lie in (0, 1]")
    n = matrix.n_cols
    q = check_permutation(col_perm, n)
    t0 = time.perf_counter()

    a_ptr = matrix.col_ptr.tolist()
    a_rows = matrix.row_idx.tolist()
    a_vals = matrix.values.tolist()

    pinv = [-1] * n           # original row -> pivot step, -1 while unpivoted
    l_rows: list[list[int]] = []   # off-diagonal rows of L, original row numbering
    l_vals: list[list[float]] = []
    u_cols: list[tuple[list[int], list[float]]] = []  # (pivoted original rows, values)
    pivots: list[float] = []
    pivot_rows: list[int] = []
    x = [0.0] * n
    mark = [-1] * n
    flops = matrix.nnz

    for k in range(n):
        col = int(q[k])
        lo, hi = a_ptr[col], a_ptr[col + 1]

        # symbolic: reach of A[:, col] in the graph of L, reverse postorder
        post: list[int] = []
        for start in a_rows[lo:hi]:
            if mark[start] == k:
                continue
            mark[start] = k
            stack = [(start, 0)]
            while stack:
                node, child = stack[-1]
                step = pinv[node]
                kids = l_rows[step] if step >= 0 else ()
                while child < len(kids) and mark[kids[child]] == k:
                    child += 1
                if child < len(kids):
                    stack[-1] = (node, child + 1)
                    nxt = kids[child]
                    mark[nxt] = k
                    stack.append((nxt, 0))
                else:
                    stack.pop()
                    post.append(node)
        post.reverse()

        # numeric: scatter and sweep
        for i in post:
            x[i] = 0.0
        for p in range(lo, hi):
            x[a_rows[p]] = a_vals[p]
        u_r: list[int] = []
        u_v: list[float] = []
        cand: list[int] = []
        for j in post:
            step = pinv[j]
            if step < 0:
                cand.append(j)
                continue
            xj = x[j]
            u_r.append(j)
            u_v.append(xj)
            rows = l_rows[step]
            vals = l_vals[step]
            for t in range(len(rows)):
                x[rows[t]] -= vals[t] * xj
            flops += len(rows)

        if not cand:
            raise SingularMatrixError("structural", k, col)
        cand.sort()
        best, amax = cand[0], abs(x[cand[0]])
        for i in cand[1:]:
            v = abs(x[i])
            if v > amax:
                best, amax = i, v
        if amax == 0.0:
            raise SingularMatrixError("numerical", k, col)
        if pivot_threshold < 1.0 and pinv[col] < 0 and mark[col] == k \
                and abs(x[col]) >= pivot_threshold * amax:
            best = col

        piv = x[best]
        pinv[best] = k
        pivots.append(piv)
        pivot_rows.append(best)
        u_cols.append((u_r, u_v))
        lr = [i for i in cand if i != best]
        l_rows.append(lr)
        l_vals.append([x[i] / piv for i in lr])
        flops += len(lr)

    # assemble factors in pivot-step coordinates
    lr_all, lc_all, lv_all = list(range(n)), list(range(n)), [1.0] * n
    ur_all, uc_all, uv_all = list(range(n)), list(range(n)), list(pivots)
    for k in range(n):
        rows = l_rows[k]
        lr_all.extend(pinv[i] for i in rows)
        lc_all.extend([k] * len(rows))
        lv_all.extend(l_vals[k])
        r, v = u_cols[k]
        ur_all.extend(pinv[i] for i in r)
        uc_all.extend([k] * len(r))
        uv_all.extend(v)
    L = from_coo(n, n, lr_all, lc_all, lv_all)
    U = from_coo(n, n, ur_all, uc_all, uv_all)
    elapsed = time.perf_counter() - t0

    amax_a = float(np.abs(matrix.values).max()) if matrix.nnz else 0.0
    growth = float(np.abs(U.values).max()) / amax_a if amax_a > 0 and n else 0.0
    stats = FactorStats(
        fill_in=(L.nnz - n) + U.nnz - matrix.nnz,
        flops=flops,
        factor_time=elapsed,
        max_pivot_growth=growth,
    )
    factors = LuFactors(L=L, U=U, row_perm=np.asarray(pivot_rows, dtype=np.int64), col_perm=q)
    return factors, stats


def solve(factors: LuFactors, rhs) -> np.ndarray:
    """Solve ``A x = rhs``: permute rows, forward with L, backward with U, unpermute."""
    n = factors.n
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side of length {n} expected, got shape {b.shape}")
    y = b[factors.row_perm].copy()

    L, U = factors.L, factors.U
    for k in range(n):
        rows, vals = L.column(k)
        yk = y[k]
        if yk != 0.0:
            below = rows > k
            y[rows[below]] -= vals[below] * yk
    for k in range(n - 1, -1, -1):
        rows, vals = U.column(k)
        diag = rows == k
        d = vals[diag]
        if d.size == 0 or d[0] == 0.0:
            raise SingularMatrixError("numerical", k, int(factors.col_perm[k]))
        y[k] /= d[0]
        above = rows < k
        y[rows[above]] -= vals[above] * y[k]

    x = np.empty(n)
    x[factors.col_perm] = y
    return x


def symbolic_fill(pattern: SparseMatrix, order) -> int:
    """Fill edges created by eliminating the vertices of a symmetric pattern in ``order``."""
    adj = symmetric_adjacency(pattern)
    perm = check_permutation(order, len(adj))
    fill = 0
    for v in perm.tolist():
        nbrs = adj[v]
        adj[v] = set()
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            missing = nbrs - au
            missing.discard(u)
            fill += len(missing)
            au |= missing
    # every new edge was counted from both endpoints
    return fill // 2

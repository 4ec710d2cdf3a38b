"""Fill-reducing column orderings.

Every routine returns a permutation array ``perm`` where ``perm[k]`` is the
original column placed at position ``k``. Ties are always broken toward the
smallest index, so results are deterministic.
"""

from __future__ import annotations

import enum
import heapq

import numpy as np

from .sparse import SparseMatrix, at_plus_a_pattern, ata_pattern

__all__ = [
    "OrderingParam",
    "natural_order",
    "min_degree_order",
    "approx_min_degree_columns",
    "order",
    "symmetric_adjacency",
]


class OrderingParam(str, enum.Enum):
    """The tunable ordering knob. ``COLAMD`` is the solver default."""

    COLAMD = "COLAMD"
    NATURAL = "NATURAL"
    AT_PLUS_A = "AT_PLUS_A"
    AT_TIMES_A = "AT_TIMES_A"

    @classmethod
    def default(cls) -> "OrderingParam":
        return cls.COLAMD

    @classmethod
    def parse(cls, name: str) -> "OrderingParam":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ValueError(f"unknown ordering parameter {name!r}") from None

    def __str__(self):
        return self.value


def natural_order(n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    return np.arange(n, dtype=np.int64)


def symmetric_adjacency(pattern: SparseMatrix) -> list[set[int]]:
    """Off-diagonal neighbour sets of a structurally symmetric pattern."""
    if not pattern.is_square:
        raise ValueError("square pattern required")
    n = pattern.n_rows
    rows = pattern.row_idx.tolist()
    cols = pattern.col_indices().tolist()
    adj: list[set[int]] = [set() for _ in range(n)]
    for i, j in zip(rows, cols):
        if i != j:
            adj[j].add(i)
    for j in range(n):
        for i in adj[j]:
            if j not in adj[i]:
                raise ValueError(f"pattern is not symmetric: ({i}, {j}) has no mirror")
    return adj


def min_degree_order(pattern: SparseMatrix) -> np.ndarray:
    """Greedy exact minimum degree on an explicit elimination graph.

    Eliminating a vertex joins all of its remaining neighbours into a clique.
    """
    adj = symmetric_adjacency(pattern)
    n = len(adj)
    heap = [(len(adj[v]), v) for v in range(n)]
    heapq.heapify(heap)
    eliminated = [False] * n
    perm = []
    while heap:
        deg, v = heapq.heappop(heap)
        if eliminated[v] or deg != len(adj[v]):
            continue
        eliminated[v] = True
        perm.append(v)
        nbrs = adj[v]
        adj[v] = set()
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au |= nbrs
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
    return np.asarray(perm, dtype=np.int64)


def approx_min_degree_columns(matrix: SparseMatrix) -> np.ndarray:
    """Column minimum degree on the structure of ``A^T A`` without forming it.

    Rows are kept as column sets. Eliminating a column merges every row it
    touches into one new row (an element) and absorbs any row that is now a
    subset of it. A column's score is the summed length of its rows, an upper
    bound on its ``A^T A`` degree counting itself.
    """
    if not matrix.is_square:
        raise ValueError(f"square matrix required, got {matrix.n_rows}x{matrix.n_cols}")
    n = matrix.n_cols
    cols_of: dict[int, set[int]] = {}
    for i, j in zip(matrix.row_idx.tolist(), matrix.col_indices().tolist()):
        cols_of.setdefault(i, set()).add(j)
    rows_of: list[set[int]] = [set() for _ in range(n)]
    for r, cs in cols_of.items():
        for c in cs:
            rows_of[c].add(r)

    def score(c):
        # columns touching no row score like a diagonal-only column
        return max(1, sum(len(cols_of[r]) for r in rows_of[c]))

    scores = [score(c) for c in range(n)]
    heap = [(scores[c], c) for c in range(n)]
    heapq.heapify(heap)
    done = [False] * n
    next_row = matrix.n_rows
    perm = []
    while heap:
        s, p = heapq.heappop(heap)
        if done[p] or s != scores[p]:
            continue
        done[p] = True
        perm.append(p)

        merged = rows_of[p]
        rows_of[p] = set()
        element: set[int] = set()
        for r in merged:
            element |= cols_of.pop(r)
        element.discard(p)
        if not element:
            continue
        e = next_row
        next_row += 1
        cols_of[e] = element
        absorbed = set()
        for c in element:
            rc = rows_of[c]
            rc -= merged
            for r in rc:
                if r not in absorbed and cols_of[r] <= element:
                    absorbed.add(r)
            rc.add(e)
        for r in absorbed:
            for c in cols_of.pop(r):
                rows_of[c].discard(r)
        for c in element:
            scores[c] = score(c)
            heapq.heappush(heap, (scores[c], c))
    return np.asarray(perm, dtype=np.int64)


def order(matrix: SparseMatrix, param: OrderingParam | str) -> np.ndarray:
    param = OrderingParam.parse(param) if isinstance(param, str) else param
    if not matrix.is_square:
        raise ValueError(f"square matrix required, got {matrix.n_rows}x{matrix.n_cols}")
    if param is OrderingParam.NATURAL:
        return natural_order(matrix.n_cols)
    if param is OrderingParam.AT_PLUS_A:
        return min_degree_order(at_plus_a_pattern(matrix))
    if param is OrderingParam.AT_TIMES_A:
        return min_degree_order(ata_pattern(matrix))
    return approx_min_degree_columns(matrix)

"""Synthetic test matrices.

All generators are deterministic given their seed and return nonsingular,
diagonally weighted matrices so every ordering factors cleanly.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix, from_coo

__all__ = [
    "tridiagonal",
    "banded",
    "arrow",
    "grid_convection_diffusion",
    "random_sparse",
    "circuit_like",
    "block_diagonal_coupled",
    "BUNDLED_CORPUS",
    "build_bundled_corpus",
]


def tridiagonal(n: int, seed: int = 0) -> SparseMatrix:
    return banded(n, 1, seed)


def banded(n: int, half_bandwidth: int, seed: int = 0) -> SparseMatrix:
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    for off in range(-half_bandwidth, half_bandwidth + 1):
        i = np.arange(max(0, -off), min(n, n - off))
        rows.append(i)
        cols.append(i + off)
        vals.append(rng.uniform(-1, 1, i.size) if off else
                    rng.uniform(2 * half_bandwidth + 1, 2 * half_bandwidth + 2, i.size))
    return from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def arrow(n: int, hub: int = 0, seed: int = 0) -> SparseMatrix:
    """Diagonal plus one dense row and column at ``hub``."""
    rng = np.random.default_rng(seed)
    idx = np.arange(n)
    leaves = idx[idx != hub]
    rows = np.concatenate([idx, np.full(n - 1, hub), leaves])
    cols = np.concatenate([idx, leaves, np.full(n - 1, hub)])
    vals = np.concatenate([np.full(n, 10.0 * n), rng.uniform(0.5, 1.0, 2 * (n - 1))])
    return from_coo(n, n, rows, cols, vals)


def grid_convection_diffusion(m: int, wind: float = 0.3) -> SparseMatrix:
    """Upwinded 5-point operator on an ``m x m`` grid: symmetric pattern, unsymmetric values."""
    n = m * m
    rows, cols, vals = [], [], []
    for gy in range(m):
        for gx in range(m):
            k = gy * m + gx
            rows.append(k); cols.append(k); vals.append(4.0 + wind)
            for dx, dy, w in ((-1, 0, -1.0 - wind), (1, 0, -1.0), (0, -1, -1.0), (0, 1, -1.0)):
                x, y = gx + dx, gy + dy
                if 0 <= x < m and 0 <= y < m:
                    rows.append(k); cols.append(y * m + x); vals.append(w)
    return from_coo(n, n, rows, cols, vals)


def random_sparse(n: int, density: float, seed: int = 0) -> SparseMatrix:
    """Random off-diagonal entries at roughly ``density`` (a fraction) plus a full diagonal."""
    rng = np.random.default_rng(seed)
    target = max(0, int(round(density * n * n)) - n)
    rows = rng.integers(0, n, size=2 * target + 8)
    cols = rng.integers(0, n, size=2 * target + 8)
    keep = rows != cols
    pairs = np.unique(np.stack([rows[keep], cols[keep]], axis=1), axis=0)
    pairs = pairs[rng.permutation(len(pairs))[:target]]
    idx = np.arange(n)
    r = np.concatenate([idx, pairs[:, 0]])
    c = np.concatenate([idx, pairs[:, 1]])
    v = np.concatenate([rng.uniform(1.0, 2.0, n) * rng.choice([-1.0, 1.0], n),
                        rng.standard_normal(len(pairs))])
    return from_coo(n, n, r, c, v)


def circuit_like(n: int, hubs: int = 3, per_row: int = 2, seed: int = 0) -> SparseMatrix:
    """Sparse random coupling plus a few dense rows/columns (supply and ground nets)."""
    rng = np.random.default_rng(seed)
    hub_ids = rng.choice(n, size=hubs, replace=False)
    idx = np.arange(n)
    rows = [idx, np.repeat(idx, per_row)]
    cols = [idx, rng.integers(0, n, size=n * per_row)]
    for h in hub_ids:
        members = rng.choice(n, size=n // 2, replace=False)
        rows += [np.full(members.size, h), members]
        cols += [members, np.full(members.size, h)]
    r, c = np.concatenate(rows), np.concatenate(cols)
    keep = r != c
    r, c = np.concatenate([idx, r[keep]]), np.concatenate([idx, c[keep]])
    pat = from_coo(n, n, r, c)
    v = rng.uniform(-1.0, 1.0, pat.nnz)
    diag = pat.row_idx == pat.col_indices()
    v[diag] = n * rng.uniform(1.0, 2.0, int(diag.sum()))
    return SparseMatrix(n, n, pat.col_ptr, pat.row_idx, v)


def block_diagonal_coupled(blocks: int, size: int, fill: float = 0.5, coupling: int = 0,
                           seed: int = 0) -> SparseMatrix:
    rng = np.random.default_rng(seed)
    n = blocks * size
    rows, cols = [np.arange(n)], [np.arange(n)]
    for b in range(blocks):
        mask = rng.random((size, size)) < fill
        i, j = np.nonzero(mask)
        rows.append(i + b * size)
        cols.append(j + b * size)
    coupling = coupling or blocks
    rows.append(rng.integers(0, n, coupling))
    cols.append(rng.integers(0, n, coupling))
    pat = from_coo(n, n, np.concatenate(rows), np.concatenate(cols))
    v = rng.uniform(-1.0, 1.0, pat.nnz)
    diag = pat.row_idx == pat.col_indices()
    v[diag] = size * rng.uniform(1.0, 2.0, int(diag.sum()))
    return SparseMatrix(n, n, pat.col_ptr, pat.row_idx, v)


# name -> zero-argument builder for the corpus shipped in raotune/data/corpus
BUNDLED_CORPUS = {
    "tridiag_200": lambda: tridiagonal(200, seed=1),
    "band5_400": lambda: banded(400, 2, seed=2),
    "arrow_hubfirst_200": lambda: arrow(200, hub=0, seed=3),
    "grid_conv_30": lambda: grid_convection_diffusion(30),
    "grid_conv_40": lambda: grid_convection_diffusion(40),
    "rand_150_3pct": lambda: random_sparse(150, 0.03, seed=4),
    "rand_100_8pct": lambda: random_sparse(100, 0.08, seed=5),
    "rand_60_20pct": lambda: random_sparse(60, 0.20, seed=6),
    "rand_40_40pct": lambda: random_sparse(40, 0.40, seed=7),
    "circuit_like_300": lambda: circuit_like(300, hubs=3, seed=8),
    "blockdiag_240": lambda: block_diagonal_coupled(12, 20, 0.5, seed=9),
    "rand_260_2pct": lambda: random_sparse(260, 0.02, seed=10),
}


def build_bundled_corpus(directory) -> None:
    """Write every bundled fixture plus ``manifest.tsv`` into ``directory``."""
    from pathlib import Path
    from .sparse import density, write_matrix_market

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["# name\tpath\texpected_density (percent, 6 decimals)"]
    for name, build in BUNDLED_CORPUS.items():
        m = build()
        with open(out / f"{name}.mtx", "w", encoding="utf-8") as fh:
            write_matrix_market(m, fh, comment=f"raotune synthetic fixture {name}")
        lines.append(f"{name}\t{name}.mtx\t{density(m):.6f}")
    (out / "manifest.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

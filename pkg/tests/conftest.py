import itertools

import numpy as np
import pytest

from raotune.sparse import SparseMatrix, from_coo

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


# -- matrix builders -----------------------------------------------------------

def random_matrix(rng, n, dens, diag=True):
    """Dense numpy matrix with roughly ``dens`` fraction of random entries."""
    a = (rng.random((n, n)) < dens) * rng.standard_normal((n, n))
    if diag:
        a[np.arange(n), np.arange(n)] = rng.uniform(1.0, 2.0, n) * rng.choice([-1, 1], n)
    return a


def random_symmetric_pattern(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return upper | upper.T | np.eye(n, dtype=bool)


def pattern_matrix(mask):
    rows, cols = np.nonzero(mask)
    return from_coo(mask.shape[0], mask.shape[1], rows, cols)


def arrow_pattern(n=5):
    m = np.eye(n, dtype=bool)
    m[0, :] = m[:, 0] = True
    return m


def tridiag_pattern(n):
    m = np.eye(n, dtype=bool)
    i = np.arange(n - 1)
    m[i, i + 1] = m[i + 1, i] = True
    return m


# -- independent oracles -------------------------------------------------------

def dense_fill(mask, order):
    """Fill edges from eliminating ``order`` on a dense Boolean adjacency matrix."""
    g = np.array(mask, dtype=bool)
    n = g.shape[0]
    alive = np.ones(n, dtype=bool)
    fill = 0
    for v in order:
        alive[v] = False
        nb = np.flatnonzero(g[v] & alive)
        for a, b in itertools.combinations(nb, 2):
            if not g[a, b]:
                g[a, b] = g[b, a] = True
                fill += 1
    return fill


def greedy_min_degree_oracle(mask):
    """Step-by-step greedy: scan all live vertices, lowest degree then lowest index."""
    g = np.array(mask, dtype=bool)
    n = g.shape[0]
    np.fill_diagonal(g, False)
    alive = np.ones(n, dtype=bool)
    out = []
    for _ in range(n):
        best, best_deg = None, None
        for v in range(n):
            if not alive[v]:
                continue
            deg = int(np.count_nonzero(g[v] & alive))
            if best is None or deg < best_deg:
                best, best_deg = v, deg
        nb = np.flatnonzero(g[best] & alive)
        for a in nb:
            for b in nb:
                if a != b:
                    g[a, b] = True
        alive[best] = False
        out.append(best)
    return out


def dense_partial_pivot_lu(a):
    """Dense elimination choosing the largest candidate, lowest original row on ties.

    Returns (row_perm, L, U) with a[row_perm] = L @ U.
    """
    work = np.array(a, dtype=np.float64)
    n = work.shape[0]
    mult = np.zeros((n, n))  # multipliers indexed by original row
    free = list(range(n))
    perm = []
    for k in range(n):
        best = free[int(np.argmax([abs(work[i, k]) for i in free]))]
        perm.append(best)
        free.remove(best)
        for i in free:
            mult[i, k] = work[i, k] / work[best, k]
            work[i, k:] -= mult[i, k] * work[best, k:]
    perm = np.asarray(perm)
    L = np.tril(mult[perm], -1) + np.eye(n)
    U = np.triu(work[perm])
    return perm, L, U


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def bundled_corpus():
    from raotune.bench import bundled_manifest, load_corpus
    return load_corpus(bundled_manifest())


@pytest.fixture(scope="session")
def bundled_sweep(bundled_corpus):
    from raotune.bench import run_sweep
    return run_sweep(bundled_corpus)

"""Reference orderings computed from a dense similarity matrix.

Both methods here assume the full pairwise score table is available up
front, which is exactly the budget assumption the query-driven pipeline
avoids. They exist to be compared against, not to be fast.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree

from .core import Permutation, SimilarityGraph, bfs_distances
from .errors import DisconnectedSimilarity


class DenseSimilarity:
    """Symmetric n-by-n score table with a zero diagonal.

    Zero off-diagonal entries mean "no evidence", not "similarity zero";
    they are treated as absent edges.
    """

    def __init__(self, matrix) -> None:
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"similarity matrix must be square, got {m.shape}")
        if m.shape[0] < 1:
            raise ValueError("similarity matrix needs at least one item")
        if not np.isfinite(m).all():
            raise ValueError("similarity matrix has non-finite entries")
        scale = float(np.abs(m).max()) or 1.0
        if float(np.abs(m - m.T).max()) > 1e-9 * scale:
            raise ValueError("similarity matrix is not symmetric")
        m = 0.5 * (m + m.T)
        np.fill_diagonal(m, 0.0)
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_store(cls, store) -> "DenseSimilarity":
        return cls(store.to_dense())

    @classmethod
    def from_csv(cls, path: str) -> "DenseSimilarity":
        from .oracle import read_similarity_csv

        return cls.from_store(read_similarity_csv(path))


def _max_similarity_tree(m: DenseSimilarity) -> SimilarityGraph:
    """Spanning tree (forest, if disconnected) of maximum total score."""
    s = m.matrix
    present = s > 0
    # shift scores into strictly positive costs so the sparse routine
    # never confuses a cheap edge with an absent one
    hi = float(s.max()) if present.any() else 0.0
    cost = np.where(present, hi + 1.0 - s, 0.0)
    tree = minimum_spanning_tree(csr_matrix(cost))
    g = SimilarityGraph(m.n)
    rows, cols = tree.nonzero()
    for u, v in zip(rows.tolist(), cols.tolist()):
        g.add_edge(u, v, float(s[u, v]))
    return g


def _dfs_linearize(g: SimilarityGraph, m: DenseSimilarity, start: int) -> list[int]:
    # children in descending similarity keeps the strongest run of the
    # tree contiguous in the output
    s = m.matrix
    out: list[int] = []
    seen = [False] * g.n
    stack = [start]
    while stack:
        u = stack.pop()
        if seen[u]:
            continue
        seen[u] = True
        out.append(u)
        nxt = sorted(g.neighbors(u), key=lambda v: (s[u, v], -v))
        stack.extend(v for v in nxt if not seen[v])
    return out


def naive_mst_order(m: DenseSimilarity) -> Permutation:
    """Linearize the maximum-similarity spanning tree by depth-first walk.

    The walk starts at an endpoint of the tree's longest path (found by a
    double sweep) and visits children in descending similarity. A
    disconnected table yields one walk per component, concatenated in
    order of smallest member id.
    """
    if m.n == 1:
        return Permutation.identity(1)
    tree = _max_similarity_tree(m)
    order: list[int] = []
    visited = [False] * m.n
    for v0 in range(m.n):
        if visited[v0]:
            continue
        # farthest-from-anywhere is one endpoint of the tree's longest path
        d0 = bfs_distances(tree, v0)
        inside = [v for v in range(m.n) if d0[v] >= 0]
        far = max(inside, key=lambda v: (d0[v], -v))
        piece = _dfs_linearize(tree, m, far)
        for v in piece:
            visited[v] = True
        order.extend(piece)
    return Permutation(order)


def _connected(m: DenseSimilarity) -> bool:
    s = m.matrix
    seen = np.zeros(m.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        reach = (s[frontier] > 0).any(axis=0) & ~seen
        frontier = np.flatnonzero(reach).tolist()
        seen[reach] = True
    return bool(seen.all())


_EIG_TOL = 1e-8


def fiedler_order(m: DenseSimilarity) -> Permutation:
    """Sort items by the Fiedler vector of the normalized Laplacian.

    The eigenpair comes from deflated power iteration on the symmetric
    form, polished by a few shifted solves if the spectral gap is too
    small for plain iteration, then de-normalized before sorting. Ties
    break by item id.
    """
    n = m.n
    if n == 1:
        return Permutation.identity(1)
    deg = m.matrix.sum(axis=1)
    if (deg <= 0).any() or not _connected(m):
        raise DisconnectedSimilarity(
            "similarity graph is disconnected; Fiedler ordering undefined"
        )
    dinv = 1.0 / np.sqrt(deg)
    adj = dinv[:, None] * m.matrix * dinv[None, :]
    lap = np.eye(n) - adj

    # trivial eigenvector of the symmetric form; everything stays
    # orthogonal to it
    v0 = np.sqrt(deg)
    v0 /= np.linalg.norm(v0)

    x = np.arange(n, dtype=np.float64) - 0.5 * (n - 1)
    x -= (v0 @ x) * v0
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        x = np.cos(np.linspace(0.0, 3.0, n))
        x -= (v0 @ x) * v0
        nx = np.linalg.norm(x)
    x /= nx

    lam = float(x @ (lap @ x))
    for it in range(10 * n):
        # power step on 2I - L keeps the smallest nontrivial mode dominant
        x = 2.0 * x - lap @ x
        x -= (v0 @ x) * v0
        x /= np.linalg.norm(x)
        if it % 8 == 7 or it == 10 * n - 1:
            lam = float(x @ (lap @ x))
            if np.linalg.norm(lap @ x - lam * x) <= _EIG_TOL:
                break
    if np.linalg.norm(lap @ x - lam * x) > _EIG_TOL:
        # near-degenerate gap: a handful of shifted solves converge
        # cubically where thousands of power steps would stall
        for _ in range(8):
            shifted = lap - (lam - 1e-12) * np.eye(n)
            try:
                y = np.linalg.solve(shifted, x)
            except np.linalg.LinAlgError:
                break
            y -= (v0 @ y) * v0
            ny = np.linalg.norm(y)
            if not np.isfinite(ny) or ny < 1e-12:
                break
            x = y / ny
            lam = float(x @ (lap @ x))
            if np.linalg.norm(lap @ x - lam * x) <= 1e-12:
                break

    fiedler = dinv * x
    if fiedler[int(np.argmax(np.abs(fiedler)))] < 0:
        fiedler = -fiedler
    order = np.lexsort((np.arange(n), fiedler))
    return Permutation(order)

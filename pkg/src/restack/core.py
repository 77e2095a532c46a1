"""Core data types shared by every stage of the ordering pipeline.

Items are dense integer ids 0..n-1 throughout; external labels are mapped
at the CLI boundary only.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, LengthMismatch


class Permutation:
    """A total order over items 0..n-1.

    order[k] is the item placed at position k; rank[i] is the position of
    item i. Both views are kept consistent.
    """

    __slots__ = ("order", "rank")

    def __init__(self, order):
        arr = np.asarray(order, dtype=np.int64)
        n = arr.shape[0]
        if n == 0:
            raise ValueError("empty permutation")
        rank = np.full(n, -1, dtype=np.int64)
        rank[arr] = np.arange(n, dtype=np.int64)  # raises on out-of-range ids
        if (rank < 0).any():
            raise ValueError("order is not a permutation of 0..n-1")
        self.order = arr
        self.rank = rank

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.order.shape[0])

    def reversed(self) -> "Permutation":
        return Permutation(self.order[::-1].copy())

    def canonical(self) -> "Permutation":
        """Fixed orientation: the lower end item comes first."""
        if self.n > 1 and self.order[0] > self.order[-1]:
            return self.reversed()
        return self

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(
            self.order, other.order
        )

    def __hash__(self):
        return hash(self.order.tobytes())

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Permutation({self.order.tolist()})"

    def matches_up_to_reversal(self, other: "Permutation") -> bool:
        if self.n != other.n:
            raise LengthMismatch(f"{self.n} vs {other.n} items")
        return np.array_equal(self.order, other.order) or np.array_equal(
            self.order, other.order[::-1]
        )


@dataclass(frozen=True)
class GroundTruthLine:
    """Hidden 1-d layout used by synthetic oracles.

    positions[i] is the coordinate of item i. Adjacent coordinates are at
    least 1 apart, so index distance along the true order never exceeds
    coordinate distance.
    """

    positions: np.ndarray
    perm: Permutation  # items sorted by increasing position

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    def index_distance(self, u: int, v: int) -> int:
        """Distance in true-order steps, not coordinates."""
        return int(abs(self.perm.rank[u] - self.perm.rank[v]))


def unit_line(n: int, rng: np.random.Generator) -> GroundTruthLine:
    """Unit-spaced line with item ids shuffled relative to positions."""
    if n < 1:
        raise ValueError("need at least one item")
    order = rng.permutation(n).astype(np.int64)
    positions = np.empty(n, dtype=np.float64)
    positions[order] = np.arange(n, dtype=np.float64)
    return GroundTruthLine(positions=positions, perm=Permutation(order))


class SimilarityGraph:
    """Undirected weighted graph over items 0..n-1.

    Edge keys are normalized to (min, max). Absent edges are absent, never
    zero-weight. Mutation bumps a version counter so cached adjacency
    snapshots stay consistent.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        self.n = n
        self._adj: list[dict[int, float]] = [dict() for _ in range(n)]
        self._num_edges = 0
        self._version = 0
        self._snapshot_version = -1
        self._snapshot: list[list[int]] | None = None

    def add_edge(self, u: int, v: int, weight: float) -> None:
        if u == v:
            raise ValueError(f"self edge at {u}")
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ValueError(f"edge ({u},{v}) out of range for n={self.n}")
        if v not in self._adj[u]:
            self._num_edges += 1
        self._adj[u][v] = weight
        self._adj[v][u] = weight
        self._version += 1

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj[u]

    def weight(self, u: int, v: int) -> float:
        return self._adj[u][v]

    def neighbors(self, u: int) -> dict[int, float]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    @property
    def num_edges(self) -> int:
        return self._num_edges

    def edges(self):
        """Yield (u, v, weight) with u < v, ascending key order."""
        for u in range(self.n):
            for v in sorted(self._adj[u]):
                if u < v:
                    yield u, v, self._adj[u][v]

    def edge_keys(self) -> set[tuple[int, int]]:
        return {(u, v) for u, v, _ in self.edges()}

    def sorted_adjacency(self) -> list[list[int]]:
        """Cached neighbor lists in ascending id order (for deterministic BFS)."""
        if self._snapshot_version != self._version or self._snapshot is None:
            self._snapshot = [sorted(d) for d in self._adj]
            self._snapshot_version = self._version
        return self._snapshot

    def copy(self) -> "SimilarityGraph":
        g = SimilarityGraph(self.n)
        for u, v, w in self.edges():
            g.add_edge(u, v, w)
        return g


class UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n  # number of disjoint sets

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # compress the walked path
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.count -= 1
        return True

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def components(self) -> list[list[int]]:
        """Members grouped by root, each group and the listing id-sorted."""
        groups: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            groups.setdefault(self.find(x), []).append(x)
        return [groups[r] for r in sorted(groups)]


class QueryLedger:
    """Exact count of oracle probes, broken down by pipeline phase.

    Increments are atomic so threaded harnesses can share one ledger.
    """

    def __init__(self):
        self.total = 0
        self.per_phase: dict[str, int] = {}
        self._phase = "unphased"
        self._lock = threading.Lock()

    def charge(self, k: int = 1) -> None:
        if k < 0:
            raise ValueError("cannot charge a negative probe count")
        with self._lock:
            self.total += k
            self.per_phase[self._phase] = self.per_phase.get(self._phase, 0) + k

    def phase(self, name: str) -> "_PhaseScope":
        return _PhaseScope(self, name)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self.per_phase)


class _PhaseScope:
    def __init__(self, ledger: QueryLedger, name: str):
        self.ledger = ledger
        self.name = name
        self._prev = ""

    def __enter__(self):
        self._prev = self.ledger._phase
        self.ledger._phase = self.name
        return self.ledger

    def __exit__(self, *exc):
        self.ledger._phase = self._prev
        return False


def bfs_distances(g: SimilarityGraph, start: int) -> list[int]:
    """Hop counts from start; -1 marks unreachable vertices.

    Neighbors are visited in ascending id so downstream tie-breaks are
    reproducible.
    """
    adj = g.sorted_adjacency()
    dist = [-1] * g.n
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du + 1
                queue.append(v)
    return dist


def multi_source_bfs(g: SimilarityGraph, sources) -> list[int]:
    """Hop counts to the nearest of several sources; -1 if unreachable."""
    adj = g.sorted_adjacency()
    dist = [-1] * g.n
    queue = deque()
    for s in sources:
        s = int(s)
        if dist[s] < 0:
            dist[s] = 0
            queue.append(s)
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du + 1
                queue.append(v)
    return dist


def graph_distance(g: SimilarityGraph, u: int, v: int) -> int | None:
    """Shortest-path hop count, or None when v is unreachable from u."""
    if u == v:
        return 0
    d = bfs_distances(g, u)[v]
    return None if d < 0 else d


def farthest_vertex(dist: list[int]) -> tuple[int, int]:
    """(vertex, distance) maximizing distance; lowest id wins ties."""
    best_v, best_d = 0, -1
    for v, d in enumerate(dist):
        if d > best_d:
            best_v, best_d = v, d
    return best_v, best_d


def double_sweep(g: SimilarityGraph, start: int = 0) -> tuple[int, int, int]:
    """Two-pass BFS diameter probe.

    Returns (endpoint_a, endpoint_b, bound) where bound = dist(a, b) is a
    lower bound on the true diameter. Raises DisconnectedGraph if any
    vertex is unreachable from start.
    """
    dist0 = bfs_distances(g, start)
    if min(dist0) < 0:
        raise DisconnectedGraph("double sweep requires a connected graph")
    a, _ = farthest_vertex(dist0)
    dist_a = bfs_distances(g, a)
    b, bound = farthest_vertex(dist_a)
    return a, b, bound


@dataclass
class SubgraphView:
    """Restriction of a graph to a vertex subset, for per-component sweeps."""

    graph: SimilarityGraph
    members: list[int]
    _local: dict[int, int] = field(default_factory=dict)

    def local_graph(self) -> tuple[SimilarityGraph, list[int]]:
        """Copy the induced subgraph into local ids; returns (graph, id map)."""
        self._local = {item: k for k, item in enumerate(self.members)}
        sub = SimilarityGraph(len(self.members))
        for item in self.members:
            for v, w in self.graph.neighbors(item).items():
                if item < v and v in self._local:
                    sub.add_edge(self._local[item], self._local[v], w)
        return sub, list(self.members)

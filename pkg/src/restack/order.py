"""Chain assembly: from a weighted short-range graph to one total order.

The assembly never moves a vertex once it is interior to a chain. Every
join glues two chain endpoints, so earlier high-confidence decisions are
permanent and the whole run costs O(E log E) heap traffic plus O(N log N)
chain concatenation.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import Permutation, SimilarityGraph
from .errors import IsolatedVertex, NotAnEndpoint

Edge = tuple[int, int]


def _edge_key(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass
class TopTwoGraph:
    """Union of every vertex's two strongest incident edges.

    Vertices whose degree in that union exceeds two are hubs: something
    pulled extra edges onto them, so their neighborhood is ambiguous and
    they sit out the early assembly stages.
    """

    n: int
    first: list[int]
    second: list[int | None]
    edges: dict[Edge, float]
    hubs: list[int]
    degree: np.ndarray

    def is_hub(self, v: int) -> bool:
        return bool(self.degree[v] > 2)


def build_top_two(g: SimilarityGraph) -> TopTwoGraph:
    """Select per-vertex top-2 edges by weight, ties to the lower edge key."""
    first: list[int] = []
    second: list[int | None] = []
    edges: dict[Edge, float] = {}
    for u in range(g.n):
        nbrs = g.neighbors(u)
        if not nbrs:
            raise IsolatedVertex(u)
        ranked = sorted(nbrs.items(), key=lambda it: (-it[1], _edge_key(u, it[0])))
        first.append(ranked[0][0])
        second.append(ranked[1][0] if len(ranked) > 1 else None)
        for v, w in ranked[:2]:
            edges[_edge_key(u, v)] = w
    degree = np.zeros(g.n, dtype=np.int64)
    for (a, b) in edges:
        degree[a] += 1
        degree[b] += 1
    hubs = [int(v) for v in np.flatnonzero(degree > 2)]
    return TopTwoGraph(
        n=g.n, first=first, second=second, edges=edges, hubs=hubs, degree=degree
    )


@dataclass
class AssemblyResult:
    chains: list[list[int]]
    permutation: Permutation | None
    iterations: int
    stage_merges: dict[int, int]
    heap_pushes: int
    heap_pops: int

    @property
    def complete(self) -> bool:
        return self.permutation is not None


@dataclass
class _MergeEvent:
    stage: int
    u: int
    v: int
    chain: list[int]


class ChainAssembly:
    """Stateful greedy assembly; run() drives the four stages in order.

    Stage 1 adopts mutually chosen top-two edges (hub edges held back,
    cycles broken at their weakest edge) into mini-chains; a join both
    endpoints voted for needs no further evidence. Stage 2 joins
    mini-chains along remaining top-two edges in deferral rounds: an
    edge merges while it is the unique heaviest live option at both
    ends, and contested joins wait for rivals to retire. Stage 3 widens
    the pool to every graph edge between current endpoints, which also
    reintroduces the hubs. Stage 4 allows a join scored by an edge one
    step inward from an endpoint, for graphs whose outermost edges
    never got probed. Anything still fragmented after
    that is returned as-is for the caller to report.
    """

    def __init__(self, g: SimilarityGraph, top: TopTwoGraph | None = None):
        self.g = g
        self.top = top if top is not None else build_top_two(g)
        self.chain_of = list(range(g.n))
        self.chains: dict[int, deque[int]] = {v: deque([v]) for v in range(g.n)}
        self.iterations = 0
        self.stage_merges = {1: 0, 2: 0, 3: 0, 4: 0}
        self.heap_pushes = 0
        self.heap_pops = 0
        self._on_merge = None

    # -- chain state ---------------------------------------------------

    def is_endpoint(self, v: int) -> bool:
        dq = self.chains[self.chain_of[v]]
        return dq[0] == v or dq[-1] == v

    def endpoint_best(self, v: int) -> tuple[float, int] | None:
        """Best admissible partner for endpoint v: the heaviest graph
        edge to an endpoint of another chain, ties to the lower edge key.
        """
        if not self.is_endpoint(v):
            raise NotAnEndpoint(v)
        best: tuple[float, Edge, int] | None = None
        own = self.chain_of[v]
        for u, w in self.g.neighbors(v).items():
            if self.chain_of[u] == own or not self.is_endpoint(u):
                continue
            cand = (-w, _edge_key(v, u), u)
            if best is None or cand[:2] < best[:2]:
                best = cand
        if best is None:
            return None
        return (-best[0], best[2])

    def _merge(self, u: int, v: int, stage: int) -> None:
        ci, cj = self.chain_of[u], self.chain_of[v]
        dq_i, dq_j = self.chains[ci], self.chains[cj]
        if len(dq_i) < len(dq_j):
            ci, cj = cj, ci
            dq_i, dq_j = dq_j, dq_i
            u, v = v, u
        # orient the smaller chain to meet u's end of the larger one
        side = list(dq_j) if dq_j[0] == v else list(reversed(dq_j))
        if dq_i[-1] == u:
            dq_i.extend(side)
        else:
            dq_i.extendleft(side)
        for x in side:
            self.chain_of[x] = ci
        del self.chains[cj]
        self.iterations += 1
        self.stage_merges[stage] += 1
        if self._on_merge is not None:
            self._on_merge(_MergeEvent(stage=stage, u=u, v=v, chain=list(dq_i)))

    # -- stages --------------------------------------------------------

    def _stage1(self) -> None:
        n = self.top.n
        picks: list[set[int]] = []
        for v in range(n):
            chosen = {self.top.first[v]}
            if self.top.second[v] is not None:
                chosen.add(self.top.second[v])
            picks.append(chosen)
        adj: dict[int, list[tuple[int, float]]] = {v: [] for v in range(n)}
        for (a, b), w in self.top.edges.items():
            if self.top.is_hub(a) or self.top.is_hub(b):
                continue
            if b not in picks[a] or a not in picks[b]:
                # one-sided selections wait for the weight-ordered stages
                continue
            adj[a].append((b, w))
            adj[b].append((a, w))

        visited = [False] * n

        def walk(start: int, skip: Edge | None) -> None:
            visited[start] = True
            prev = None
            cur = start
            while True:
                nxt = None
                for nb, _w in sorted(adj[cur]):
                    if nb == prev or visited[nb]:
                        continue
                    if skip is not None and _edge_key(cur, nb) == skip:
                        continue
                    nxt = nb
                    break
                if nxt is None:
                    return
                visited[nxt] = True
                self._merge(cur, nxt, stage=1)
                prev, cur = cur, nxt

        for v in range(n):
            if not visited[v] and len(adj[v]) <= 1:
                walk(v, skip=None)
        for v in range(n):
            if visited[v] or not adj[v]:
                continue
            # an untouched degree-2 component is a cycle; drop its
            # weakest edge (ties to the lowest key) and walk the rest
            cyc = [v]
            seen = {v}
            prev, cur = None, v
            while True:
                nxt = next(nb for nb, _w in sorted(adj[cur]) if nb != prev)
                if nxt in seen:
                    break
                cyc.append(nxt)
                seen.add(nxt)
                prev, cur = cur, nxt
            drop = min(
                (_edge_key(cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc))),
                key=lambda e: (self.top.edges[e], e),
            )
            walk(drop[0], skip=drop)

    def _drain(self, cands: list[tuple[float, Edge, int, int]], stage: int) -> None:
        """Heap pass first, deferral rounds for exact ties after.

        With distinct weights nothing defers: each edge is popped once
        and either merges or is dead, which keeps the per-edge work
        constant. An edge whose endpoint carries an equally heavy live
        rival is a coin flip the theory says cannot happen, so those go
        to the tie rounds instead of being settled by id order.
        """
        heap = [(-w, key, u, v) for (w, key, u, v) in cands]
        heapq.heapify(heap)
        incident: dict[int, list[tuple[float, Edge, int, int]]] = {}
        for e in cands:
            incident.setdefault(e[2], []).append(e)
            incident.setdefault(e[3], []).append(e)
        for lst in incident.values():
            lst.sort(key=lambda e: (-e[0], e[1]))
        deferred: list[tuple[float, Edge, int, int]] = []
        while heap:
            negw, key, u, v = heapq.heappop(heap)
            self.heap_pops += 1
            if self.chain_of[u] == self.chain_of[v]:
                continue
            if not self.is_endpoint(u) or not self.is_endpoint(v):
                continue
            if self._live_rival(incident, -negw, key, u, v):
                deferred.append((-negw, key, u, v))
                continue
            self._merge(u, v, stage=stage)
        if deferred:
            self._tie_rounds(deferred, stage)

    def _live_rival(self, incident, w: float, key: Edge, u: int, v: int) -> bool:
        for x in (u, v):
            for cand in incident.get(x, ()):
                if cand[0] < w:
                    break
                if cand[1] == key:
                    continue
                if self.chain_of[cand[2]] == self.chain_of[cand[3]]:
                    continue
                if not self.is_endpoint(cand[2]) or not self.is_endpoint(cand[3]):
                    continue
                return True
        return False

    def _tie_rounds(self, cands: list[tuple[float, Edge, int, int]], stage: int) -> None:
        # round discipline: an edge merges only while it is the unique
        # heaviest live option at both its endpoints, so a contested
        # join waits for other merges to retire its rivals instead of
        # being settled by tie-break. A round with no such edge forces
        # the single globally best one and the sweep starts over.
        while True:
            alive: list[tuple[float, Edge, int, int]] = []
            for w, key, u, v in cands:
                if self.chain_of[u] == self.chain_of[v]:
                    continue
                if not self.is_endpoint(u) or not self.is_endpoint(v):
                    continue
                alive.append((w, key, u, v))
                self.heap_pops += 1
            if not alive:
                return
            best_w: dict[int, float] = {}
            best_n: dict[int, int] = {}
            for w, _key, u, v in alive:
                for x in (u, v):
                    if x not in best_w or w > best_w[x]:
                        best_w[x] = w
                        best_n[x] = 1
                    elif w == best_w[x]:
                        best_n[x] += 1
            safe = [
                e
                for e in alive
                if all(best_w[x] == e[0] and best_n[x] == 1 for x in e[2:])
            ]
            merged = 0
            for w, _key, u, v in sorted(safe, key=lambda e: (-e[0], e[1])):
                if self.chain_of[u] == self.chain_of[v]:
                    continue
                if not self.is_endpoint(u) or not self.is_endpoint(v):
                    continue
                self._merge(u, v, stage=stage)
                merged += 1
            if not merged:
                w, _key, u, v = min(alive, key=lambda e: (-e[0], e[1]))
                self._merge(u, v, stage=stage)

    def _stage2(self) -> None:
        cands: list[tuple[float, Edge, int, int]] = []
        for (a, b), w in self.top.edges.items():
            if self.top.is_hub(a) or self.top.is_hub(b):
                continue
            if self.chain_of[a] == self.chain_of[b]:
                continue
            cands.append((w, _edge_key(a, b), a, b))
            self.heap_pushes += 1
        self._drain(cands, stage=2)

    def _stage3(self) -> None:
        # every graph edge whose ends are both endpoints right now;
        # endpoints only retire as stages proceed, so one upfront scan
        # covers every join this stage could ever make
        cands = []
        for u, v, w in self.g.edges():
            if self.chain_of[u] == self.chain_of[v]:
                continue
            if self.is_endpoint(u) and self.is_endpoint(v):
                cands.append((w, _edge_key(u, v), u, v))
                self.heap_pushes += 1
        self._drain(cands, stage=3)

    def _near_end_vertices(self, cid: int) -> list[tuple[int, int]]:
        dq = self.chains[cid]
        out = [(dq[0], dq[0]), (dq[-1], dq[-1])]
        if len(dq) > 1:
            out.append((dq[1], dq[0]))
            out.append((dq[-2], dq[-1]))
        return out

    def _stage4(self) -> None:
        while len(self.chains) > 1:
            best = None
            for cid in sorted(self.chains):
                for x, end_x in self._near_end_vertices(cid):
                    for y, w in self.g.neighbors(x).items():
                        other = self.chain_of[y]
                        if other == cid:
                            continue
                        attach = None
                        for yy, end_y in self._near_end_vertices(other):
                            if yy == y:
                                attach = end_y
                                break
                        if attach is None:
                            continue
                        cand = (-w, _edge_key(x, y), end_x, attach)
                        if best is None or cand[:2] < best[:2]:
                            best = cand
            if best is None:
                return
            self._merge(best[2], best[3], stage=4)

    def run(self, on_merge=None) -> AssemblyResult:
        self._on_merge = on_merge
        self._stage1()
        self._stage2()
        self._stage3()
        if len(self.chains) > 1:
            self._stage4()
        chains = [list(self.chains[c]) for c in sorted(self.chains)]
        perm = None
        if len(chains) == 1:
            perm = Permutation(chains[0]).canonical()
        return AssemblyResult(
            chains=chains,
            permutation=perm,
            iterations=self.iterations,
            stage_merges=dict(self.stage_merges),
            heap_pushes=self.heap_pushes,
            heap_pops=self.heap_pops,
        )


def assemble_chains(
    g: SimilarityGraph, top: TopTwoGraph | None = None, on_merge=None
) -> AssemblyResult:
    return ChainAssembly(g, top).run(on_merge=on_merge)


@dataclass
class MarginReport:
    """Per-item gap between the true-neighbor edge and the best rival.

    margin > 0 everywhere means greedy selection can never prefer a
    rival; +inf marks items with no rivals at all, -inf marks a missing
    true-neighbor edge (fatal for exact recovery).
    """

    items: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    global_min: float = float("inf")
    worst_item: int | None = None


def margin_report(g: SimilarityGraph, truth: Permutation) -> MarginReport:
    rep = MarginReport()
    order = truth.order
    n = len(order)
    for i in range(1, n):
        v = int(order[i])
        prev = int(order[i - 1])
        nxt = int(order[i + 1]) if i + 1 < n else None
        nbrs = g.neighbors(v)
        true_w = nbrs.get(prev)
        rivals = [w for x, w in nbrs.items() if x != prev and x != nxt]
        rival_w = max(rivals) if rivals else None
        if true_w is None:
            margin = float("-inf")
        elif rival_w is None:
            margin = float("inf")
        else:
            margin = true_w - rival_w
        rep.items[v] = (
            float("nan") if true_w is None else true_w,
            float("nan") if rival_w is None else rival_w,
            margin,
        )
        if margin < rep.global_min:
            rep.global_min = margin
            rep.worst_item = v
    return rep

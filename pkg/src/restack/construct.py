"""Graph construction phases: connect, condense, order provisionally, densify.

The phases share three pieces of state: the growing SimilarityGraph, the
QueryLedger inside the oracle, and a PairSet recording every probed pair so
no pair is ever charged twice. All randomness flows from one Generator so
a fixed seed replays the identical construction.

Phase sketch for a distance oracle additionally runs a coordinate survey
(landmark trilateration) whose estimates steer candidate sampling; a
binary oracle exposes no distances, so its candidate search stays blind
and costs quadratically more probes. That gap is inherent, not a tuning
matter: a yes/no probe against a hidden layout carries at most one bit,
and first contact with each item needs Theta(n / c) of them.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Permutation,
    QueryLedger,
    SimilarityGraph,
    UnionFind,
    bfs_distances,
    multi_source_bfs,
)
from .errors import ConnectivityStalled, DisconnectedGraph

_CHUNK_MERGE_FACTOR = 4


@dataclass
class PipelineConfig:
    """Tuning knobs for the construction phases.

    K is the densification window in provisional-rank units; None means
    gamma * c. s is the per-component candidate batch per round; None
    means ceil(a * log2 n). Ablation variants toggle the skip_* flags or
    pin K and s directly.
    """

    K: int | None = None
    gamma: int = 4
    a: float = 2.0
    s: int | None = None
    max_boruvka_rounds: int | None = None
    condensation_rounds: int | None = None
    condense_window: int | None = None
    skip_condense: bool = False
    skip_densify: bool = False
    sketch: str = "auto"  # auto | on | off
    pool_width: int | None = None
    seed: int = 0
    threads: int = 1

    def resolved_K(self, c: int) -> int:
        if self.K is not None:
            if self.K < 0:
                raise ValueError("window width cannot be negative")
            return self.K
        return self.gamma * c

    def resolved_s(self, n: int) -> int:
        if self.s is not None:
            if self.s < 1:
                raise ValueError("candidate batch must be positive")
            return self.s
        return max(1, math.ceil(self.a * math.log2(max(2, n))))

    def resolved_rounds_cap(self, n: int) -> int:
        if self.max_boruvka_rounds is not None:
            return self.max_boruvka_rounds
        # blind mode pays most of its probes on the last few boundaries;
        # the cap only guards against a truly unmergeable input
        return 2000 + 20 * math.ceil(math.sqrt(n))

    def resolved_condense_window(self, c: int) -> int:
        if self.condense_window is not None:
            return self.condense_window
        return 2 * c

    def use_sketch(self, oracle) -> bool:
        if self.sketch == "off" or oracle.kind != "distance":
            return False
        if self.sketch == "on":
            return True
        eps = oracle.cfg.eps
        # blind random pairing needs a quadratic probe count before the
        # last components touch, so position estimates pay for themselves
        # at any radius; the bracket refinement stops contracting past
        # eps ~ 0.12, after which estimates are too loose to hook on
        return eps > 0 and 6.0 * eps <= 0.75 and oracle.n >= 64


# a dense bitmap of n^2 pair bits is affordable up to this many items
# (8 MB); beyond it membership falls back to sorted key chunks
_BITMAP_LIMIT = 8192


class PairSet:
    """Set of probed (min, max) pairs, numpy-backed for batch queries.

    Keys are lo * n + hi packed into int64. Small problems keep one bit
    per possible pair, making membership and insertion single indexed
    operations. Large problems accumulate sorted key chunks merged
    geometrically, so membership stays a few searchsorted calls no
    matter how many probes pile up.
    """

    def __init__(self, n: int):
        self.n = n
        self.count = 0
        self._bits: np.ndarray | None = None
        if n <= _BITMAP_LIMIT:
            self._bits = np.zeros((n * n + 63) // 64, dtype=np.uint64)
        self._chunks: list[np.ndarray] = []

    def _keys(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        lo = np.minimum(us, vs).astype(np.int64)
        hi = np.maximum(us, vs).astype(np.int64)
        return lo * np.int64(self.n) + hi

    def _contains_keys(self, keys: np.ndarray) -> np.ndarray:
        if self._bits is not None:
            word = self._bits[keys >> 6]
            return (word >> (keys & np.int64(63)).astype(np.uint64)) & np.uint64(1) != 0
        out = np.zeros(keys.shape[0], dtype=bool)
        for chunk in self._chunks:
            idx = np.searchsorted(chunk, keys)
            idx[idx == chunk.shape[0]] = 0
            out |= chunk[idx] == keys
        return out

    def contains(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        return self._contains_keys(self._keys(us, vs))

    def fresh_mask(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Entries that are both first-in-batch and never probed before."""
        keys = self._keys(us, vs)
        uniq, first = np.unique(keys, return_index=True)
        fresh = np.zeros(keys.shape[0], dtype=bool)
        fresh[first[~self._contains_keys(uniq)]] = True
        return fresh

    def record(self, us: np.ndarray, vs: np.ndarray) -> None:
        if len(us) == 0:
            return
        if self._bits is not None:
            keys = np.unique(self._keys(us, vs))
            slot = keys >> 6
            bit = np.uint64(1) << (keys & np.int64(63)).astype(np.uint64)
            word = self._bits[slot]
            self.count += int(((word & bit) == 0).sum())
            # or-at instead of fancy-index store: distinct keys can share
            # a word
            np.bitwise_or.at(self._bits, slot, bit)
            return
        keys = np.unique(self._keys(us, vs))
        self.count += keys.shape[0]
        self._chunks.append(keys)
        # merge small chunks so lookups stay logarithmic
        while (
            len(self._chunks) > 1
            and self._chunks[-2].shape[0]
            < _CHUNK_MERGE_FACTOR * self._chunks[-1].shape[0]
        ):
            b = self._chunks.pop()
            a = self._chunks.pop()
            merged = np.union1d(a, b)
            self.count -= a.shape[0] + b.shape[0] - merged.shape[0]
            self._chunks.append(merged)

    def first_occurrence(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Mask of in-batch first occurrences of each pair key."""
        keys = self._keys(us, vs)
        mask = np.zeros(keys.shape[0], dtype=bool)
        _, first = np.unique(keys, return_index=True)
        mask[first] = True
        return mask


@dataclass
class ProvisionalOrder:
    """BFS-layered order used to aim the densification window."""

    perm: Permutation
    endpoint_a: int
    endpoint_b: int
    bound: int


@dataclass
class CondenseInfo:
    rounds: int = 0
    bounds: list[int] = field(default_factory=list)
    new_edges: int = 0


@dataclass
class SurveyInfo:
    estimates: np.ndarray | None = None
    rounds: int = 0


def boruvka_connect(
    oracle,
    cfg: PipelineConfig,
    *,
    graph: SimilarityGraph | None = None,
    probed: PairSet | None = None,
    rng: np.random.Generator | None = None,
    sketch: np.ndarray | None = None,
) -> SimilarityGraph:
    """Grow a spanning subgraph by synchronized component rounds.

    Each round every surviving component draws a batch of candidate
    pairs (a hook vertex of its own against an item outside) and probes
    them in order; the first accepted probe becomes that component's
    merging edge and the rest of its batch is never probed or charged.
    All merges apply after all components have probed.

    With sketch estimates the hooks are the component's estimated
    extremes and candidates come from just beyond them, which finds a
    merge in O(1) probes. Blind mode samples hook and candidate
    uniformly: a component boundary is invisible until a probe lands on
    it, so expected cost per merge scales with the pair count, not the
    component count. Batches widen as components dwindle to keep the
    round count bounded; the first-accept cutoff keeps the charge
    identical to sequential probing either way.

    Raises ConnectivityStalled with the surviving components when the
    round cap runs out.
    """
    n = oracle.n
    g = graph if graph is not None else SimilarityGraph(n)
    probed = probed if probed is not None else PairSet(n)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    s = cfg.resolved_s(n)
    cap = cfg.resolved_rounds_cap(n)

    comp = _BoruvkaState(n, sketch)
    for u, v, _w in g.edges():  # edges found during the survey pre-connect
        comp.apply_merge(u, v)

    order = rank = None
    if sketch is not None:
        order = np.argsort(sketch, kind="stable").astype(np.int64)
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n, dtype=np.int64)
    pool_w = cfg.pool_width if cfg.pool_width is not None else max(
        8, 4 * getattr(getattr(oracle, "cfg", None), "c", 2)
    )

    rounds = 0
    zero_streak = 0
    endgame = None
    while comp.count > 1:
        if rounds >= cap:
            raise ConnectivityStalled(comp.component_lists(), rounds)
        rounds += 1
        if endgame is not None:
            endgame.run_round()
            continue
        k = comp.count
        # aim each round at a roughly constant number of pair
        # evaluations: fat batches amortize per-round overhead when few
        # components survive, and the first-accept charge cutoff keeps
        # most of the extra probes unbilled
        s_eff = s * max(1, min(256, 2048 // (s * k)))
        if sketch is not None:
            # estimates can misplace a boundary item beyond the pool, and
            # an exhausted pool replays known rejects forever; widening on
            # a schedule keeps stragglers merging while typical components
            # finish at the base width
            pool_eff = min(n, pool_w << min(8, rounds // 8))
            if 2 * pool_eff >= n:
                # offsets this wide clip onto the rank extremes and the
                # pool collapses to two items; uniform sampling does not
                hooks, cand, roots = _blind_pairs(comp, s_eff, rng, n)
            else:
                hooks, cand, roots = _sketch_pairs(comp, order, rank, pool_eff, s, rng, rounds)
            merged = _probe_round(oracle, g, comp, probed, hooks, roots, cand)
            zero_streak = zero_streak + 1 if merged == 0 else 0
            if endgame is None and (
                (merged == 0 and comp.count <= 512) or zero_streak >= 8
            ):
                # fruitless rounds mean the estimate itself is misleading
                # near the surviving boundaries; switch to the
                # graph-guided rescue for the rest of the run
                endgame = _ZoneEndgame(oracle, g, comp, probed, sketch, order, rank)
        else:
            hooks, cand, roots = _blind_pairs(comp, s_eff, rng, n)
            _probe_round(oracle, g, comp, probed, hooks, roots, cand)
    return g


class _BoruvkaState:
    """Union-find plus per-component member arrays and, when position
    estimates exist, pools of each component's outermost members.

    Hook pools instead of single extreme members: local estimate
    scramble can make the one estimated-extreme item a true-interior
    one, and a component hooked there rejects every outside pair
    forever. The union's outermost P members always come from the two
    sides' pools, so merges keep the pools exact at O(P log P) each."""

    HOOK_POOL = 8

    def __init__(self, n: int, est: np.ndarray | None = None):
        self.n = n
        self.uf = UnionFind(n)
        self.comp_id = np.arange(n, dtype=np.int64)
        self.members: dict[int, np.ndarray] = {
            i: np.asarray([i], dtype=np.int64) for i in range(n)
        }
        self.est = est
        if est is not None:
            P = self.HOOK_POOL
            self.lo_pool = np.full((n, P), -1, dtype=np.int64)
            self.hi_pool = np.full((n, P), -1, dtype=np.int64)
            self.lo_pool[:, 0] = np.arange(n, dtype=np.int64)
            self.hi_pool[:, 0] = np.arange(n, dtype=np.int64)
            self.lo_cnt = np.ones(n, dtype=np.int64)
            self.hi_cnt = np.ones(n, dtype=np.int64)

    @property
    def count(self) -> int:
        return self.uf.count

    def component_lists(self) -> list[list[int]]:
        return [sorted(int(x) for x in self.members[r]) for r in sorted(self.members)]

    def apply_merge(self, u: int, v: int) -> bool:
        ru, rv = self.uf.find(u), self.uf.find(v)
        if ru == rv:
            return False
        self.uf.union(ru, rv)
        root = self.uf.find(ru)
        gone = rv if root == ru else ru
        moved = self.members.pop(gone)
        self.members[root] = np.concatenate([self.members[root], moved])
        self.comp_id[moved] = root
        if self.est is not None:
            P = self.HOOK_POOL
            for pool, cnt, sgn in (
                (self.lo_pool, self.lo_cnt, 1.0),
                (self.hi_pool, self.hi_cnt, -1.0),
            ):
                both = np.concatenate(
                    [pool[root, : cnt[root]], pool[gone, : cnt[gone]]]
                )
                take = both[np.argsort(sgn * self.est[both], kind="stable")[:P]]
                pool[root, : take.shape[0]] = take
                cnt[root] = take.shape[0]
        return True


def _blind_pairs(comp, s_eff, rng, n):
    """Uniform (member, outside) candidate pairs, one batch per component."""
    roots_list = sorted(comp.members)
    k = len(roots_list)
    roots = np.asarray(roots_list, dtype=np.int64)
    if k == n:
        hooks = np.repeat(roots, s_eff).reshape(k, s_eff)
    else:
        sizes = np.fromiter(
            (comp.members[r].shape[0] for r in roots_list), count=k, dtype=np.int64
        )
        flat = np.concatenate([comp.members[r] for r in roots_list])
        starts = np.concatenate([[0], np.cumsum(sizes[:-1])])
        slot = (rng.random((k, s_eff)) * sizes[:, None]).astype(np.int64)
        hooks = flat[starts[:, None] + slot]
    if s_eff >= 32:
        # wide rows mean few components; draw without replacement so a
        # round covers distinct candidates instead of resampling them
        cand = np.empty((k, s_eff), dtype=np.int64)
        for row in range(k):
            pool = np.flatnonzero(comp.comp_id != roots[row])
            if pool.shape[0] == 0:
                cand[row] = hooks[row]
                continue
            rng.shuffle(pool)
            cand[row] = np.resize(pool, s_eff)
        return hooks, cand, roots
    cand = rng.integers(0, n, size=(k, s_eff), dtype=np.int64)
    own = comp.comp_id[cand] == roots[:, None]
    for _ in range(8):
        bad = int(own.sum())
        if bad == 0:
            break
        cand[own] = rng.integers(0, n, size=bad, dtype=np.int64)
        own = comp.comp_id[cand] == roots[:, None]
    if own.any():
        # a dominant component defeats rejection sampling; draw its rows
        # from the explicit complement
        for row in np.flatnonzero(own.any(axis=1)):
            outside = np.flatnonzero(comp.comp_id != roots[row])
            if outside.shape[0]:
                cand[row] = rng.choice(outside, size=s_eff, replace=True)
    return hooks, cand, roots


def _sketch_pairs(comp, order, rank, pool_w, s, rng, round_no):
    """Hooks drawn from each component's outermost-member pools,
    candidates just beyond the hook in estimate rank.

    Columns alternate ends so both boundaries stay in play every round,
    and sampling over the pool instead of pinning the single estimated
    extreme keeps a usable boundary item in rotation when the estimate
    scrambles the end of a component."""
    n = order.shape[0]
    roots_list = sorted(comp.members)
    k = len(roots_list)
    roots = np.asarray(roots_list, dtype=np.int64)
    rows = roots[:, None]
    is_lo = (np.arange(s, dtype=np.int64)[None, :] + round_no) % 2 == 0
    is_lo = np.broadcast_to(is_lo, (k, s))
    u = rng.random((k, s))
    pick_lo = (u * comp.lo_cnt[rows]).astype(np.int64)
    pick_hi = (u * comp.hi_cnt[rows]).astype(np.int64)
    hooks = np.where(
        is_lo, comp.lo_pool[rows, pick_lo], comp.hi_pool[rows, pick_hi]
    )
    sign = np.where(is_lo, -1, 1)
    offs = rng.integers(1, pool_w + 1, size=(k, s), dtype=np.int64) * sign
    slots = np.clip(rank[hooks] + offs, 0, n - 1)
    cand = order[slots]
    own = comp.comp_id[cand] == rows
    for width in (2 * pool_w, 4 * pool_w):
        bad = int(own.sum())
        if bad == 0:
            break
        # near the line ends the outward side is exhausted; widen and
        # allow both directions before giving up on the sketch
        offs = rng.integers(1, width + 1, size=bad, dtype=np.int64)
        offs *= rng.integers(0, 2, size=bad, dtype=np.int64) * 2 - 1
        slots = np.clip(rank[hooks[own]] + offs, 0, n - 1)
        cand[own] = order[slots]
        own = comp.comp_id[cand] == rows
    if own.any():
        for row in np.flatnonzero(own.any(axis=1)):
            outside = np.flatnonzero(comp.comp_id != roots[row])
            if outside.shape[0]:
                bad_cols = np.flatnonzero(own[row])
                cand[row, bad_cols] = rng.choice(
                    outside, size=bad_cols.shape[0], replace=True
                )
    return hooks, cand, roots


def _probe_round(oracle, g, comp, probed, hooks, roots, cand):
    """One synchronized round: probe, cut off at first accepts, merge.

    Pairs already recorded as charged replay for free: they are known
    rejects, since an accepted pair merged its endpoints and candidates
    exclude own component.  Everything else is probed unledgered and
    only the prefix through each component's first accept is charged.
    """
    k, s = cand.shape
    us = hooks.reshape(-1)
    vs = cand.reshape(-1)
    seen = probed._contains_keys(probed._keys(us, vs))
    accepted = np.zeros(k * s, dtype=bool)
    weights = np.ones(k * s, dtype=np.float64)
    idx = np.flatnonzero(~seen)
    if idx.shape[0]:
        acc, w, _obs = oracle.probe_batch(us[idx], vs[idx], charge=False)
        accepted[idx] = acc
        weights[idx] = w

    accepted2 = accepted.reshape(k, s)
    any_acc = accepted2.any(axis=1)
    first_idx = np.where(any_acc, accepted2.argmax(axis=1), s - 1)
    col = np.arange(s)[None, :]
    prefix = col <= first_idx[:, None]
    charged = ~seen.reshape(k, s) & prefix
    n_charged = int(charged.sum())
    if n_charged:
        oracle.ledger.charge(n_charged)
        flat = charged.reshape(-1)
        probed.record(us[flat], vs[flat])

    merge_rows = np.flatnonzero(any_acc)
    merged = 0
    for row in merge_rows:
        j = int(first_idx[row])
        u = int(hooks[row, j])
        v = int(cand[row, j])
        w = float(weights.reshape(k, s)[row, j])
        if not g.has_edge(u, v):
            g.add_edge(u, v, w)
        if comp.apply_merge(u, v):
            merged += 1
    return merged


class _ZoneEndgame:
    """Graph-guided merging for components the sketch cannot finish.

    Landmark estimates heal into locally clean stretches separated by
    scrambled seams, and a component that grew inside one stretch ends
    up hooking from an estimated extreme that is really an interior
    item. Interior hooks reject every outside pair, so such a component
    never merges no matter how wide the candidate window gets.

    The accepted subgraph is the better guide by then: every component
    is a within-c chain, so a double sweep over its own edges finds its
    true ends. Each round a component probes pairs between its end
    zones and their estimate-rank neighborhoods, nearest estimate gap
    first, stopping at its first accept. A component whose whole batch
    rejects escalates its own zone depth and window; recorded rejects
    replay free, so retrying under a wider setting never pays twice.
    """

    def __init__(self, oracle, g, comp, probed, est, order, rank):
        self.oracle = oracle
        self.g = g
        self.comp = comp
        self.probed = probed
        self.est = est
        self.order = order
        self.rank = rank
        c = getattr(getattr(oracle, "cfg", None), "c", 2)
        self.zone_r = 2 * c
        self.window = 64
        self.cap = 2048
        self.fails: dict[int, int] = {}
        self._zone_cache: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._cand_cache: dict[int, tuple[tuple, tuple]] = {}

    def _bfs(self, start: int, members: set[int]) -> dict[int, int]:
        dist = {start: 0}
        q = deque([start])
        while q:
            u = q.popleft()
            du = dist[u] + 1
            for v in self.g.neighbors(u):
                if v in members and v not in dist:
                    dist[v] = du
                    q.append(v)
        return dist

    def _zones(self, root: int, zone_r: int) -> tuple[np.ndarray, np.ndarray]:
        members = self.comp.members[root]
        key = (root, members.shape[0], zone_r)
        hit = self._zone_cache.get(key)
        if hit is not None:
            return hit
        mset = {int(x) for x in members}
        d0 = self._bfs(int(members[0]), mset)
        a = max(d0, key=d0.__getitem__)
        da = self._bfs(a, mset)
        b = max(da, key=da.__getitem__)
        db = self._bfs(b, mset)
        za = np.asarray(sorted(v for v, d in da.items() if d <= zone_r), dtype=np.int64)
        zb = np.asarray(sorted(v for v, d in db.items() if d <= zone_r), dtype=np.int64)
        out = (za, zb)
        self._zone_cache[key] = out
        return out

    def _candidates(self, root: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        boost = min(7, self.fails.get(root, 0))
        key = (root, self.comp.members[root].shape[0], boost)
        hit = self._cand_cache.get(root)
        if hit is not None and hit[0] == key:
            return hit[1]
        n = self.rank.shape[0]
        # the sweep ends sit within c of the component's true extremes,
        # so the zone barely needs to grow; the estimate displacement of
        # the matching items across the seam is the unknown that the
        # widening window has to chase
        zone_r = min(self.zone_r * (2 if boost >= 4 else 1), 1 << 6)
        window = min(self.window << boost, n)
        za, zb = self._zones(root, zone_r)
        zone = np.unique(np.concatenate([za, zb]))
        offs = np.arange(1, window + 1, dtype=np.int64)
        us_parts: list[np.ndarray] = []
        vs_parts: list[np.ndarray] = []
        for u in zone.tolist():
            slots = np.concatenate([self.rank[u] - offs[::-1], self.rank[u] + offs])
            slots = slots[(slots >= 0) & (slots < n)]
            vs = self.order[slots]
            vs = vs[self.comp.comp_id[vs] != root]
            if vs.shape[0]:
                us_parts.append(np.full(vs.shape[0], u, dtype=np.int64))
                vs_parts.append(vs)
        if not us_parts:
            out = (
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.float64),
            )
        else:
            us = np.concatenate(us_parts)
            vs = np.concatenate(vs_parts)
            lo = np.minimum(us, vs)
            hi = np.maximum(us, vs)
            _, first = np.unique(lo * np.int64(n) + hi, return_index=True)
            us, vs = us[first], vs[first]
            out = (us, vs, np.abs(self.est[us] - self.est[vs]))
        self._cand_cache[root] = (key, out)
        return out

    def _pairs_for(self, root: int) -> tuple[np.ndarray, np.ndarray]:
        us, vs, gap = self._candidates(root)
        if us.shape[0] == 0:
            return us, vs
        # recorded pairs are known rejects; keep them out of the batch
        # so the fresh frontier advances every round instead of replaying
        # the same nearest candidates forever
        fresh = ~self.probed.contains(us, vs)
        us, vs, gap = us[fresh], vs[fresh], gap[fresh]
        sel = np.argsort(gap, kind="stable")[: self.cap]
        return us[sel], vs[sel]

    def run_round(self) -> int:
        by_size = sorted(
            self.comp.members, key=lambda r: (self.comp.members[r].shape[0], r)
        )
        merges = 0
        touched: set[int] = set()
        for root in by_size:
            if root not in self.comp.members or root in touched:
                # absorbed or already grown this round; a fresh double
                # sweep next round beats probing from stale zones now
                continue
            us, vs = self._pairs_for(root)
            if us.shape[0]:
                live = self.comp.comp_id[us] != self.comp.comp_id[vs]
                us, vs = us[live], vs[live]
            if us.shape[0] == 0:
                self.fails[root] = self.fails.get(root, 0) + 1
                continue
            acc, w, _obs = self.oracle.probe_batch(us, vs, charge=False)
            if acc.any():
                # sequential billing: charge through the first accept,
                # leave the rest of the batch unprobed on the ledger
                j = int(np.argmax(acc))
                self.oracle.ledger.charge(j + 1)
                self.probed.record(us[: j + 1], vs[: j + 1])
                u, v = int(us[j]), int(vs[j])
                ru = int(self.comp.comp_id[u])
                rv = int(self.comp.comp_id[v])
                if not self.g.has_edge(u, v):
                    self.g.add_edge(u, v, float(w[j]))
                self.comp.apply_merge(u, v)
                touched.add(ru)
                touched.add(rv)
                merges += 1
            else:
                self.oracle.ledger.charge(int(us.shape[0]))
                self.probed.record(us, vs)
                self.fails[root] = self.fails.get(root, 0) + 1
        alive = self.comp.members
        self._cand_cache = {r: v for r, v in self._cand_cache.items() if r in alive}
        self._zone_cache = {k: v for k, v in self._zone_cache.items() if k[0] in alive}
        return merges


def survey_positions(
    oracle,
    cfg: PipelineConfig,
    *,
    graph: SimilarityGraph,
    probed: PairSet,
) -> SurveyInfo:
    """Estimate every item's coordinate from noisy distance probes.

    Two landmark sweeps anchor a provisional axis; bracket-refinement
    rounds then shrink the estimate error geometrically (contraction
    about 6 * eps per round) until it reaches the acceptance radius.
    Accepted probes double as graph edges. Returns estimates or None
    when the oracle exposes no distances.
    """
    if oracle.kind != "distance":
        return SurveyInfo()
    n = oracle.n
    eps = oracle.cfg.eps
    c = oracle.cfg.c
    everyone = np.arange(n, dtype=np.int64)

    def sweep(landmark: int) -> np.ndarray:
        # reprobing a recorded pair replays its deterministic value free
        # of charge, so the second sweep need not special-case overlap
        others = everyone[everyone != landmark]
        ls = np.full(others.shape[0], landmark, dtype=np.int64)
        new = ~probed.contains(ls, others)
        acc, w, obs = oracle.probe_batch(ls, others, charge=new)
        probed.record(ls[new], others[new])
        out = np.zeros(n, dtype=np.float64)
        out[others] = obs
        for i in np.flatnonzero(acc):
            u, v = int(ls[i]), int(others[i])
            if not graph.has_edge(u, v):
                graph.add_edge(u, v, float(w[i]))
        return out

    d0 = sweep(0)
    l1 = int(np.argmax(d0))
    d1 = sweep(l1)
    l2 = int(np.argmax(d1))
    d2 = sweep(l2)
    # signed two-anchor coordinate: linear between the anchors, clamped
    # into a small pile beyond them, and half the single-sweep noise
    est = 0.5 * (d2 - d1)

    # refining much past half the densification window buys nothing: the
    # window pass sweeps up what coarse estimates miss
    target = float(max(c, cfg.resolved_K(c) // 2, 2))
    err = max(target, eps * n)
    # each bracket round roughly averages the two landmark errors, so
    # contraction is a measured ~0.7 per round, not anything faster
    shrink = 0.72
    cap = 4 + max(0, math.ceil(math.log(max(1.0, err / target)) / math.log(1.0 / shrink)))
    rounds = 0
    while err > target and rounds < min(cap, 40):
        rounds += 1
        order = np.argsort(est, kind="stable").astype(np.int64)
        spacing = max(2, int(math.ceil(2.0 * err)))
        offset = (rounds % 2) * (spacing // 2)
        inner = np.arange(max(1, offset), n - 1, spacing, dtype=np.int64)
        # end slots guarantee every item a bracket on both sides
        slots = np.unique(np.concatenate([[0], inner, [n - 1]]))
        landmarks = order[slots]
        is_lm = np.zeros(n, dtype=bool)
        is_lm[landmarks] = True
        items = everyone[~is_lm]
        if items.shape[0] == 0:
            break
        ranks = np.empty(n, dtype=np.int64)
        ranks[order] = np.arange(n)
        seg = np.searchsorted(slots, ranks[items], side="right") - 1
        left = landmarks[seg]
        right = landmarks[seg + 1]

        def measure(a: np.ndarray, b: np.ndarray) -> np.ndarray:
            new = probed.fresh_mask(a, b)
            _acc, w, obs = oracle.probe_batch(a, b, charge=new)
            probed.record(a[new], b[new])
            for i in np.flatnonzero(_acc):
                u, v = int(a[i]), int(b[i])
                if not graph.has_edge(u, v):
                    graph.add_edge(u, v, float(w[i]))
            return obs

        dl = measure(items, left)
        dr = measure(items, right)
        est = est.copy()
        est[items] = 0.5 * ((est[left] + dl) + (est[right] - dr))
        err *= shrink
        # the modeled contraction is open loop and turns to fiction once
        # landmark errors correlate; measure the real local scale on a
        # thin sample of estimate-adjacent pairs and stop on evidence.
        # residual seams beyond local reach are the connect phase's job
        o2 = np.argsort(est, kind="stable").astype(np.int64)
        vi = np.unique(np.linspace(0, n - 2, min(256, n - 1)).astype(np.int64))
        va, vb = o2[vi], o2[vi + 1]
        local = np.abs(measure(va, vb) - np.abs(est[vb] - est[va]))
        if float(np.percentile(local, 95)) <= target:
            break
    return SurveyInfo(estimates=est, rounds=rounds)


def _window_pairs(order: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """All pairs within `width` ranks of each other, each once."""
    n = order.shape[0]
    us = []
    vs = []
    for j in range(1, min(width, n - 1) + 1):
        us.append(order[:-j])
        vs.append(order[j:])
    if not us:
        e = np.empty(0, dtype=np.int64)
        return e, e
    return np.concatenate(us), np.concatenate(vs)


def _probe_window(oracle, g, probed, us, vs) -> tuple[int, int]:
    """Probe the fresh subset of (us, vs); returns (fresh, accepted)."""
    new = probed.fresh_mask(us, vs)
    if not new.any():
        return 0, 0
    acc, w, _obs = oracle.probe_batch(us[new], vs[new], charge=True)
    probed.record(us[new], vs[new])
    nu, nv = us[new], vs[new]
    added = 0
    for i in np.flatnonzero(acc):
        u, v = int(nu[i]), int(nv[i])
        if not g.has_edge(u, v):
            g.add_edge(u, v, float(w[i]))
            added += 1
    return int(new.sum()), added


def _layered_order(
    g: SimilarityGraph,
) -> tuple[np.ndarray, int, int, int, np.ndarray, np.ndarray]:
    dist0 = bfs_distances(g, 0)
    if min(dist0) < 0:
        raise DisconnectedGraph("ordering requires a connected graph")
    a = int(np.argmax(np.asarray(dist0)))
    da = np.asarray(bfs_distances(g, a), dtype=np.int64)
    b = int(np.argmax(da))
    bound = int(da[b])
    db = np.asarray(bfs_distances(g, b), dtype=np.int64)
    # near ties settle by closeness to the far endpoint, then id; the
    # descending second key linearizes layer plateaus
    order = np.lexsort((np.arange(g.n), -db, da)).astype(np.int64)
    return order, a, b, bound, da, db


def condense(
    g: SimilarityGraph,
    oracle,
    cfg: PipelineConfig,
    *,
    probed: PairSet,
    initial_order: np.ndarray | None = None,
) -> CondenseInfo:
    """Pull every vertex to within a few hops of a landmark set.

    Landmarks start at the double-sweep endpoints. Each round takes the
    far half of the vertices (by hop distance to the nearest landmark),
    probes just those against their near-rank candidates to repair the
    local band around them, then promotes them to landmarks. The set's
    eccentricity halves per round, so after logarithmically many rounds
    every vertex sits within a short-edge hop of some landmark and BFS
    layers track true positions. Probing stays targeted: blanket
    coverage of the band is densification's job, not this phase's.
    """
    if cfg.skip_condense:
        return CondenseInfo()
    c = getattr(getattr(oracle, "cfg", None), "c", 2)
    width = cfg.resolved_condense_window(c)
    info = CondenseInfo()

    space = None
    if initial_order is not None:
        space = np.asarray(initial_order, dtype=np.int64)

    order, a, b, bound, da, db = _layered_order(g)
    info.bounds.append(bound)
    anchored = np.minimum(da, db)
    ecc = int(anchored.max())
    if cfg.condensation_rounds is not None:
        t_cap = cfg.condensation_rounds
    else:
        t_cap = max(1, math.ceil(math.log2(max(2, ecc)))) + 2
    landmarks = np.zeros(g.n, dtype=bool)
    landmarks[[a, b]] = True

    while info.rounds < t_cap and ecc > 2 * c:
        info.rounds += 1
        far = anchored >= max(1, ecc // 2)
        if space is None:
            space = order
        us, vs = _window_pairs(space, width)
        keep = far[us] | far[vs]
        fresh, _added = _probe_window(oracle, g, probed, us[keep], vs[keep])
        info.new_edges += fresh
        landmarks |= far
        space = None

        order, _a, _b, bound, _da, _db = _layered_order(g)
        info.bounds.append(bound)
        prev_ecc = ecc
        anchored = np.asarray(multi_source_bfs(g, np.flatnonzero(landmarks)), dtype=np.int64)
        ecc = int(anchored.max())
        if fresh == 0 and ecc >= prev_ecc:
            break
    return info


def provisional_order(g: SimilarityGraph) -> ProvisionalOrder:
    """Double-sweep BFS layering of a connected graph into a total order."""
    order, a, b, bound, _da, _db = _layered_order(g)
    return ProvisionalOrder(perm=Permutation(order), endpoint_a=a, endpoint_b=b, bound=bound)


def densify(
    g: SimilarityGraph,
    order: ProvisionalOrder,
    oracle,
    cfg: PipelineConfig,
    *,
    probed: PairSet,
) -> int:
    """Probe every unprobed pair within K provisional ranks; returns the
    total number of fresh probes (each pass is bounded by 2 n K).

    When a pass accepts new edges the layering is recomputed and the
    window swept again: a repaired layout can move a previously gapped
    true pair inside the window. The loop is a fixpoint iteration that
    stops as soon as a pass accepts nothing, and in the typical case
    runs exactly twice (the working pass plus the empty check)."""
    if cfg.skip_densify:
        return 0
    c = getattr(getattr(oracle, "cfg", None), "c", 2)
    k = cfg.resolved_K(c)
    if k == 0:
        return 0
    layout = order.perm.order
    total = 0
    for _pass in range(8):
        us, vs = _window_pairs(layout, k)
        fresh, added = _probe_window(oracle, g, probed, us, vs)
        total += fresh
        if added == 0:
            break
        layout = _layered_order(g)[0]
    return total


def rescore_by_shared_neighbors(g: SimilarityGraph) -> None:
    """Replace flat acceptance weights with closed-neighborhood Jaccard.

    A binary oracle marks edges but cannot rank them; overlap of
    neighborhoods can. On a completed short-range graph the overlap
    shrinks strictly with separation, which is exactly the per-vertex
    ranking the chain assembly needs.
    """
    closed = [set(g.neighbors(u)) | {u} for u in range(g.n)]
    updates = []
    for u, v, _w in g.edges():
        inter = len(closed[u] & closed[v])
        union = len(closed[u]) + len(closed[v]) - inter
        updates.append((u, v, inter / union))
    for u, v, w in updates:
        g.add_edge(u, v, w)

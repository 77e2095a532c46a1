"""Pairwise comparison oracles and similarity ingestion.

Three oracle families share one calling convention:

* binary: is the pair within the acceptance radius, yes or no;
* distance: a noisy measurement of the pair's true separation;
* matrix: a lookup into precomputed similarity scores.

Every probe charges the shared QueryLedger exactly once. Probe outcomes
for synthetic oracles are a pure function of (seed, item pair), so a rerun
with the same seed replays identical values regardless of query order or
thread schedule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import GroundTruthLine, QueryLedger, SimilarityGraph
from .errors import InputFormatError, SelfQuery

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xBF58476D1CE4E5B9)
_MIX3 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class OracleConfig:
    """Acceptance geometry shared by the synthetic oracles.

    rho is the acceptance radius in coordinate units; c = ceil(rho) bounds
    the true index distance of any accepted pair. eps is the one-sided
    relative error of the distance oracle; acceptance thresholds shrink by
    (1 - eps) so noise can never sneak a long pair past the test.
    """

    rho: float = 2.0
    eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("acceptance radius must be at least 1")
        if not (0 <= self.eps < 1):
            raise ValueError("relative noise must lie in [0, 1)")

    @property
    def c(self) -> int:
        return math.ceil(self.rho)

    @property
    def delta(self) -> float:
        """Acceptance threshold for observed distances, inclusive."""
        return (1.0 - self.eps) * self.rho


def accept_edge(cfg: OracleConfig, observed: float) -> bool:
    """Accept iff the observed distance is within the shrunken threshold."""
    return observed <= cfg.delta


def _charge_count(charge, total: int) -> int:
    if charge is True:
        return total
    if charge is False:
        return 0
    return int(np.count_nonzero(charge))


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized on uint64 with wrap-around arithmetic
    z = x + _MIX1
    z = (z ^ (z >> np.uint64(30))) * _MIX2
    z = (z ^ (z >> np.uint64(27))) * _MIX3
    return z ^ (z >> np.uint64(31))


def _pair_uniform(seed: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Deterministic uniform [0, 1) per (seed, lo, hi) triple."""
    s = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.ones(1, np.uint64))[0]
    h = _mix64(lo.astype(np.uint64) ^ s)
    h = _mix64(h + hi.astype(np.uint64) * _MIX2)
    return h.astype(np.float64) / 18446744073709551616.0


class NoiseDraw:
    """Per-pair multiplicative noise, replay-deterministic.

    The draw for pair (u, v) depends only on (seed, min(u,v), max(u,v)):
    repeated queries and reordered schedules see identical values.
    eta is uniform on [-eps*d, +eps*d), so observed = d + eta never drops
    below (1 - eps) * d.
    """

    def __init__(self, seed: int, eps: float):
        self.seed = seed
        self.eps = eps

    def eta(self, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        u = _pair_uniform(self.seed, lo, hi)
        return (2.0 * u - 1.0) * self.eps * d


class BinaryOracle:
    """Threshold comparison against the hidden layout: |pos_u - pos_v| <= c."""

    kind = "binary"

    def __init__(self, truth: GroundTruthLine, cfg: OracleConfig, ledger: QueryLedger):
        self.truth = truth
        self.cfg = cfg
        self.ledger = ledger
        self._pos = truth.positions

    @property
    def n(self) -> int:
        return self.truth.n

    def query(self, u: int, v: int) -> bool:
        if u == v:
            raise SelfQuery(u)
        self.ledger.charge(1)
        return bool(abs(self._pos[u] - self._pos[v]) <= self.cfg.c)

    def probe_batch(self, us: np.ndarray, vs: np.ndarray, charge=True):
        """(accepted, weight, observed) arrays; observed is None for binary.

        charge may be a bool or a per-pair mask; uncharged entries replay
        already-recorded outcomes, which are deterministic per pair.
        """
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if (us == vs).any():
            raise SelfQuery(int(us[(us == vs).argmax()]))
        self.ledger.charge(_charge_count(charge, len(us)))
        accepted = np.abs(self._pos[us] - self._pos[vs]) <= self.cfg.c
        return accepted, np.ones(len(us), dtype=np.float64), None


class NoisyDistanceOracle:
    """Distance measurement with bounded relative error.

    observed(u, v) = d + eta with |eta| <= eps * d, hence
    observed >= (1 - eps) * d: any pair passing accept_edge is truly
    within rho, and therefore within c = ceil(rho) index steps.
    """

    kind = "distance"

    def __init__(self, truth: GroundTruthLine, cfg: OracleConfig, ledger: QueryLedger):
        self.truth = truth
        self.cfg = cfg
        self.ledger = ledger
        self.noise = NoiseDraw(cfg.seed, cfg.eps)
        self._pos = truth.positions

    @property
    def n(self) -> int:
        return self.truth.n

    def query(self, u: int, v: int) -> float:
        if u == v:
            raise SelfQuery(u)
        self.ledger.charge(1)
        lo, hi = (u, v) if u < v else (v, u)
        d = abs(self._pos[u] - self._pos[v])
        eta = self.noise.eta(
            np.asarray([d]), np.asarray([lo], np.int64), np.asarray([hi], np.int64)
        )[0]
        return float(d + eta)

    def probe_batch(self, us: np.ndarray, vs: np.ndarray, charge=True):
        """(accepted, weight, observed); weight is -observed so that
        heavier means closer.

        charge may be a bool or a per-pair mask; uncharged entries replay
        already-recorded observations, which are deterministic per pair.
        """
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if (us == vs).any():
            raise SelfQuery(int(us[(us == vs).argmax()]))
        self.ledger.charge(_charge_count(charge, len(us)))
        lo = np.minimum(us, vs)
        hi = np.maximum(us, vs)
        d = np.abs(self._pos[us] - self._pos[vs])
        observed = d + self.noise.eta(d, lo, hi)
        accepted = observed <= self.cfg.delta
        return accepted, -observed, observed


class SimilarityMatrixStore:
    """Sparse symmetric score storage keyed by normalized (min, max) pairs.

    Absent pairs are genuinely absent: lookups return None, never 0.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("store needs at least one item")
        self.n = n
        self.scores: dict[tuple[int, int], float] = {}

    def put(self, u: int, v: int, score: float) -> None:
        if u == v:
            raise ValueError(f"self pair at {u}")
        lo, hi = (u, v) if u < v else (v, u)
        self.scores[(lo, hi)] = score

    def get(self, u: int, v: int) -> float | None:
        lo, hi = (u, v) if u < v else (v, u)
        return self.scores.get((lo, hi))

    def to_graph(self) -> SimilarityGraph:
        g = SimilarityGraph(self.n)
        for (u, v), s in self.scores.items():
            g.add_edge(u, v, s)
        return g

    def to_dense(self) -> np.ndarray:
        """Dense symmetric matrix with zero diagonal; absent pairs become 0.

        Only baselines consume this form; the zero-fill convention is
        theirs, not the store's.
        """
        m = np.zeros((self.n, self.n), dtype=np.float64)
        for (u, v), s in self.scores.items():
            m[u, v] = s
            m[v, u] = s
        return m


class MatrixOracle:
    """Ledger-counted lookups into a precomputed similarity store."""

    kind = "matrix"

    def __init__(self, store: SimilarityMatrixStore, ledger: QueryLedger):
        self.store = store
        self.ledger = ledger

    @property
    def n(self) -> int:
        return self.store.n

    def query(self, u: int, v: int) -> float | None:
        if u == v:
            raise SelfQuery(u)
        self.ledger.charge(1)
        return self.store.get(u, v)


def binary_query(
    cfg: OracleConfig, truth: GroundTruthLine, ledger: QueryLedger, u: int, v: int
) -> bool:
    return BinaryOracle(truth, cfg, ledger).query(u, v)


def noisy_query(
    cfg: OracleConfig, truth: GroundTruthLine, ledger: QueryLedger, u: int, v: int
) -> float:
    return NoisyDistanceOracle(truth, cfg, ledger).query(u, v)


def matrix_query(
    store: SimilarityMatrixStore, ledger: QueryLedger, u: int, v: int
) -> float | None:
    return MatrixOracle(store, ledger).query(u, v)


def combine_similarity(ssim: float, inliers: float) -> float:
    """Fold a structural score and a correspondence count into one weight."""
    if not (0.0 <= ssim <= 1.0):
        raise ValueError("structural score must lie in [0, 1]")
    if inliers < 0:
        raise ValueError("inlier count cannot be negative")
    return ssim * inliers


_HEADERS = (
    ["i", "j", "score"],
    ["i", "j", "ssim", "inliers"],
    ["i", "j", "score", "ssim", "inliers"],
)


def read_similarity_csv(path: str) -> SimilarityMatrixStore:
    """Parse a pair-score CSV into a store.

    Accepted headers: i,j,score or i,j,ssim,inliers (score is then
    ssim * inliers) or the five-column union. Ids are 0-based with i < j;
    duplicate pairs are rejected.
    """
    rows: list[tuple[int, int, float]] = []
    max_id = -1
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFormatError("empty file, header expected", line_no=1) from None
        header = [h.strip() for h in header]
        if header not in _HEADERS:
            raise InputFormatError(
                f"unrecognized header {header!r}; expected one of "
                + " | ".join(",".join(h) for h in _HEADERS),
                line_no=1,
            )
        has_score = "score" in header
        has_parts = "ssim" in header
        seen: set[tuple[int, int]] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise InputFormatError(
                    f"expected {len(header)} fields, got {len(row)}", line_no
                )
            try:
                i, j = int(row[0]), int(row[1])
            except ValueError:
                raise InputFormatError("item ids must be integers", line_no) from None
            if i < 0 or j < 0:
                raise InputFormatError("item ids must be non-negative", line_no)
            if i >= j:
                raise InputFormatError("pairs must satisfy i < j", line_no)
            if (i, j) in seen:
                raise InputFormatError(f"duplicate pair ({i},{j})", line_no)
            seen.add((i, j))
            try:
                if has_score:
                    score = float(row[2])
                else:
                    score = combine_similarity(float(row[2]), float(row[3]))
                if has_score and has_parts:
                    # all five columns present: score must agree with parts
                    recomputed = combine_similarity(float(row[3]), float(row[4]))
                    if not math.isclose(score, recomputed, rel_tol=1e-9, abs_tol=1e-12):
                        raise InputFormatError(
                            "score column disagrees with ssim * inliers", line_no
                        )
            except InputFormatError:
                raise
            except ValueError as exc:
                raise InputFormatError(str(exc), line_no) from None
            if not math.isfinite(score):
                raise InputFormatError("scores must be finite", line_no)
            rows.append((i, j, score))
            max_id = max(max_id, j)
    if max_id < 0:
        raise InputFormatError("no data rows")
    store = SimilarityMatrixStore(max_id + 1)
    for i, j, score in rows:
        store.put(i, j, score)
    return store


def write_similarity_csv(g: SimilarityGraph, path: str) -> None:
    """Emit edges as i,j,score rows with i < j, sorted, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,score\n")
        for u, v, w in g.edges():
            fh.write(f"{u},{v},{w:.12g}\n")

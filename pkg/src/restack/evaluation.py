"""Metrics and experiment harnesses.

Edge edit distance and order accuracy score a candidate permutation
against ground truth. The Monte Carlo harness measures how often each
method reassembles a deliberately fragmented chain. The ablation and
scaling harnesses run the full pipeline over synthetic lines and tabulate
query budgets and edge recovery.

Emitted CSV and JSON files never contain wall-clock timings; those go to
a plain-text sidecar so repeated runs with one seed stay byte-identical.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import DenseSimilarity, fiedler_order, naive_mst_order
from .construct import PipelineConfig
from .core import GroundTruthLine, Permutation, QueryLedger, SimilarityGraph, unit_line
from .errors import DisconnectedSimilarity, LengthMismatch
from .oracle import BinaryOracle, NoisyDistanceOracle, OracleConfig
from .order import assemble_chains, build_top_two
from .pipeline import run_pipeline


# -- metrics ----------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    """Edge-set comparison of a candidate order against ground truth."""

    eed_forward: int
    eed_reversed: int
    cost_edge: int
    accuracy: float


def _norm_edges(edges) -> set[tuple[int, int]]:
    out = set()
    for u, v in edges:
        out.add((u, v) if u <= v else (v, u))
    return out


def edge_edit_distance(a, b) -> int:
    """Size of the symmetric difference between two edge sets."""
    return len(_norm_edges(a) ^ _norm_edges(b))


def path_edges(perm: Permutation) -> set[tuple[int, int]]:
    """Adjacent pairs of a permutation, normalized to (low, high)."""
    order = perm.order
    return _norm_edges(zip(order[:-1].tolist(), order[1:].tolist()))


def order_accuracy(candidate: Permutation, truth: Permutation) -> EvalResult:
    """Score candidate against truth and its reversal, keeping the better.

    Accuracy is 1 - cost / (2 (N - 1)): the denominator is the largest
    possible path-edge symmetric difference, so the score is 1.0 for an
    exact or reversed match and 0.0 for fully disjoint edge sets.
    """
    if candidate.n != truth.n:
        raise LengthMismatch(
            f"candidate has {candidate.n} items, truth has {truth.n}"
        )
    if truth.n == 1:
        return EvalResult(0, 0, 0, 1.0)
    cand = path_edges(candidate)
    fwd = edge_edit_distance(cand, path_edges(truth))
    rev = edge_edit_distance(cand, path_edges(truth.reversed()))
    cost = min(fwd, rev)
    acc = 1.0 - cost / (2.0 * (truth.n - 1))
    return EvalResult(fwd, rev, cost, min(1.0, max(0.0, acc)))


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    """Binomial proportion confidence interval, safe at 0 and 1."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    zz = z * z
    den = 1.0 + zz / trials
    center = (p + zz / (2.0 * trials)) / den
    half = z * math.sqrt(p * (1.0 - p) / trials + zz / (4.0 * trials * trials)) / den
    return max(0.0, center - half), min(1.0, center + half)


# -- Monte Carlo fragmentation ----------------------------------------


@dataclass(frozen=True)
class MonteCarloConfig:
    """Worst-case fragmentation experiment on a short chain.

    The chain decomposes into two-item blocks whose internal edge is
    every item's strongest. Reassembly must rely on second-best edges,
    and only a fraction p of the interior items point theirs at the true
    cross-block neighbor; the rest point somewhere within
    false_candidate_radius positions.
    """

    n: int = 12
    p_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    trials: int = 5000
    false_candidate_radius: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError("chain length must be even and at least 4")
        if any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ValueError("fractions must lie in [0, 1]")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.false_candidate_radius < 2:
            raise ValueError("false candidates need radius at least 2")


def _fragment_graph(n: int, n_correct: int, radius: int, rng) -> SimilarityGraph:
    """One trial instance: block edges weight 2, second-best edges weight 1.

    Interior items chosen as correct point their second-best at the true
    neighbor outside their own block. The other interior items point at
    a false candidate within the radius, never at a true neighbor. The
    two chain ends contribute no second pick; their only true neighbor
    already sits inside their block.
    """
    g = SimilarityGraph(n)
    for u in range(0, n, 2):
        g.add_edge(u, u + 1, 2.0)
    interior = np.arange(1, n - 1)
    correct = set()
    if n_correct:
        correct = set(
            rng.choice(interior, size=n_correct, replace=False).tolist()
        )
    for u in range(1, n - 1):
        if u in correct:
            # the true neighbor outside u's own block
            v = u + 1 if u % 2 else u - 1
        else:
            while True:
                v = int(rng.integers(u - radius, u + radius + 1))
                if 0 <= v < n and abs(v - u) > 1:
                    break
        if not g.has_edge(u, v):
            g.add_edge(u, v, 1.0)
    return g


def _graph_to_dense(g: SimilarityGraph) -> DenseSimilarity:
    m = np.zeros((g.n, g.n))
    for u, v, w in g.edges():
        m[u, v] = m[v, u] = w
    return DenseSimilarity(m)


def _mc_chain(g: SimilarityGraph, truth: Permutation) -> bool:
    out = assemble_chains(g)
    return out.complete and out.permutation.matches_up_to_reversal(truth)


def _mc_fiedler(g: SimilarityGraph, truth: Permutation) -> bool:
    try:
        return fiedler_order(_graph_to_dense(g)).matches_up_to_reversal(truth)
    except DisconnectedSimilarity:
        return False


def _mc_mst(g: SimilarityGraph, truth: Permutation) -> bool:
    return naive_mst_order(_graph_to_dense(g)).matches_up_to_reversal(truth)


_MC_METHODS = {"chain": _mc_chain, "fiedler": _mc_fiedler, "mst": _mc_mst}


def monte_carlo_fragmentation(
    cfg: MonteCarloConfig, methods: list[str] | None = None
) -> list[dict]:
    """Recovery probability per (p, method), with binomial intervals.

    Each trial owns an RNG seeded from (master seed, p index, trial
    index), so results do not depend on execution order.
    """
    methods = list(_MC_METHODS) if methods is None else list(methods)
    for name in methods:
        if name not in _MC_METHODS:
            raise ValueError(f"unknown method {name!r}")
    truth = Permutation.identity(cfg.n)
    interior = cfg.n - 2
    rows = []
    for p_idx, p in enumerate(cfg.p_grid):
        n_correct = round(p * interior)
        hits = {name: 0 for name in methods}
        for trial in range(cfg.trials):
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, p_idx, trial])
            )
            g = _fragment_graph(
                cfg.n, n_correct, cfg.false_candidate_radius, rng
            )
            for name in methods:
                hits[name] += _MC_METHODS[name](g, truth)
        for name in methods:
            lo, hi = wilson_interval(hits[name], cfg.trials)
            rows.append(
                {
                    "p": p,
                    "method": name,
                    "recovery": hits[name] / cfg.trials,
                    "ci_low": lo,
                    "ci_high": hi,
                    "trials": cfg.trials,
                }
            )
    return rows


# -- ablation ----------------------------------------------------------


@dataclass(frozen=True)
class AblationVariant:
    """A pipeline configuration patch under a short label.

    Window overrides may be given as an integer or as a string multiple
    of the acceptance width, e.g. "c" or "8c", resolved per run.
    """

    label: str
    overrides: dict = field(default_factory=dict)

    def resolved(self, c: int) -> dict:
        out = {}
        for key, value in self.overrides.items():
            if isinstance(value, str):
                mult = value[:-1]
                if not value.endswith("c") or (mult and not mult.isdigit()):
                    raise ValueError(f"bad override {value!r} for {key}")
                value = int(mult or 1) * c
            out[key] = value
        return out


def default_variants() -> list[AblationVariant]:
    """The six standard pipeline variants.

    The wide-window variant doubles the default densification window
    (the default is already four acceptance widths, so a doubling is
    the smallest change that actually widens it).
    """
    return [
        AblationVariant("Ours", {}),
        AblationVariant("No-C", {"skip_condense": True}),
        AblationVariant("No-D", {"skip_densify": True}),
        AblationVariant("Small-K", {"K": "c"}),
        AblationVariant("Large-K", {"K": "8c"}),
        AblationVariant("Rand-Hook", {"s": 1}),
    ]


def second_best_support(g: SimilarityGraph, truth: Permutation) -> dict:
    """Count seam pairs along the true order and how many are mutual.

    A seam is a consecutive true pair that reciprocal strongest edges
    alone would not join, so assembly has to close it from weaker
    evidence. A seam is supported when each side still ranks the other
    within its two strongest neighbors. The counts describe the
    instance; a high supported fraction is favorable but carries no
    recovery guarantee.
    """
    top = build_top_two(g)
    order = truth.order
    gaps = supported = 0
    for i in range(order.shape[0] - 1):
        x, y = int(order[i]), int(order[i + 1])
        if top.first[x] == y and top.first[y] == x:
            continue
        gaps += 1
        in_x = y in (top.first[x], top.second[x])
        in_y = x in (top.first[y], top.second[y])
        if in_x and in_y:
            supported += 1
    return {"gaps": gaps, "supported": supported}


def band_edges(truth: GroundTruthLine, c: int) -> set[tuple[int, int]]:
    """All pairs within c positions of each other on the true line."""
    order = truth.perm.order
    n = order.shape[0]
    out = set()
    for gap in range(1, c + 1):
        for i in range(n - gap):
            u, v = int(order[i]), int(order[i + gap])
            out.add((u, v) if u < v else (v, u))
    return out


def make_synthetic_oracle(truth: GroundTruthLine, rho, eps, seed, ledger):
    cfg = OracleConfig(rho=rho, eps=eps, seed=seed)
    if eps > 0:
        return NoisyDistanceOracle(truth, cfg, ledger)
    return BinaryOracle(truth, cfg, ledger)


def run_ablation(
    variants: list[AblationVariant] | None = None,
    sizes: list[int] = (500,),
    eps: float = 0.05,
    rho: float = 2.5,
    seeds: int = 3,
    base: PipelineConfig | None = None,
) -> list[dict]:
    """Edge recovery and query budget per variant and size.

    Each cell averages over `seeds` runs. The edge-edit rate compares
    the accepted graph against the full within-c band of the true line,
    normalized by the band size. Failures are recorded in the cell, not
    raised.
    """
    variants = default_variants() if variants is None else variants
    cells = []
    for label_cfg in variants:
        for n in sizes:
            rates, calls, secs, errors = [], [], [], []
            for seed in range(seeds):
                rng = np.random.default_rng(seed)
                truth = unit_line(n, rng)
                ledger = QueryLedger()
                oracle = make_synthetic_oracle(truth, rho, eps, seed, ledger)
                c = oracle.cfg.c
                patch = dict(label_cfg.resolved(c))
                if base is not None:
                    merged = {**base.__dict__, **patch}
                else:
                    merged = patch
                merged["seed"] = seed
                cfg = PipelineConfig(**merged)
                t0 = time.perf_counter()
                try:
                    res = run_pipeline(oracle, cfg)
                except Exception as exc:  # per-cell capture by contract
                    errors.append(f"seed {seed}: {type(exc).__name__}: {exc}")
                    continue
                secs.append(time.perf_counter() - t0)
                band = band_edges(truth, c)
                rate = edge_edit_distance(res.graph.edge_keys(), band) / len(band)
                rates.append(rate)
                calls.append(res.total_queries / n)
            cells.append(
                {
                    "variant": label_cfg.label,
                    "n": n,
                    "edge_edit_rate": float(np.mean(rates)) if rates else float("nan"),
                    "calls_per_item": float(np.mean(calls)) if calls else float("nan"),
                    "seconds": float(np.mean(secs)) if secs else float("nan"),
                    "seeds": seeds,
                    "errors": errors,
                }
            )
    return cells


# -- scaling -----------------------------------------------------------


def scaling_study(
    sizes: list[int],
    rho: float = 2.5,
    eps: float = 0.05,
    seed: int = 0,
    base: PipelineConfig | None = None,
) -> list[dict]:
    """Total queries and ordering wall time per instance size."""
    rows = []
    for n in sizes:
        rng = np.random.default_rng(seed)
        truth = unit_line(n, rng)
        ledger = QueryLedger()
        oracle = make_synthetic_oracle(truth, rho, eps, seed, ledger)
        cfg = PipelineConfig(seed=seed) if base is None else base
        t0 = time.perf_counter()
        res = run_pipeline(oracle, cfg)
        dt = time.perf_counter() - t0
        acc = order_accuracy(res.permutation, truth.perm).accuracy
        rows.append(
            {
                "n": n,
                "queries": res.total_queries,
                "calls_per_item": res.total_queries / n,
                "accuracy": acc,
                "seconds": dt,
            }
        )
    return rows


def fit_loglog_slope(rows: list[dict], x: str = "n", y: str = "queries") -> float:
    """Least-squares slope of log(y) against log(x)."""
    xs = np.log([float(r[x]) for r in rows])
    ys = np.log([float(r[y]) for r in rows])
    if xs.shape[0] < 2:
        raise ValueError("need at least two sizes to fit a slope")
    return float(np.polyfit(xs, ys, 1)[0])


# -- emission ----------------------------------------------------------

_TIMING_KEYS = ("seconds",)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def write_rows_csv(
    path: str,
    rows: list[dict],
    columns: list[str] | None = None,
    comment: str | None = None,
):
    """One row per cell, LF endings, floats at fixed precision.

    Timing columns are dropped here and written by write_timing_sidecar
    instead, so the CSV is reproducible across runs. An optional comment
    (provenance hash and the like) goes on a leading # line, which both
    read_rows_csv and gnuplot skip.
    """
    if not rows:
        raise ValueError("no rows to write")
    if columns is None:
        columns = [k for k in rows[0] if k not in _TIMING_KEYS]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(col, "")) for col in columns) + "\n")


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_rows_csv(path: str) -> list[dict]:
    """Read back a write_rows_csv file; # lines skipped, numbers typed."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no data lines")
    columns = lines[0].split(",")
    return [
        dict(zip(columns, (_parse_cell(cell) for cell in ln.split(","))))
        for ln in lines[1:]
    ]


def write_json_summary(path: str, payload: dict):
    """Deterministic JSON: sorted keys, no timing entries."""
    def scrub(obj):
        if isinstance(obj, dict):
            return {
                k: scrub(v) for k, v in obj.items() if k not in _TIMING_KEYS
            }
        if isinstance(obj, (list, tuple)):
            return [scrub(v) for v in obj]
        if isinstance(obj, float):
            return round(obj, 9)
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return round(float(obj), 9)
        return obj

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scrub(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_timing_sidecar(path: str, rows: list[dict], key: str = "seconds"):
    """Wall-clock notes for humans; deliberately outside the data files."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, row in enumerate(rows):
            if key in row:
                fh.write(f"row {i}: {row[key]:.3f}s\n")

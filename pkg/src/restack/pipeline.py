"""End-to-end driver: oracle in, total order out.

Phases run in a fixed sequence (survey when distances are available,
connect, condense, provisional order, densify, rescore for binary
weights, assemble) with per-phase query counts and wall times recorded
in the result diagnostics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .construct import (
    PairSet,
    PipelineConfig,
    ProvisionalOrder,
    boruvka_connect,
    condense,
    densify,
    provisional_order,
    rescore_by_shared_neighbors,
    survey_positions,
)
from .core import Permutation, SimilarityGraph
from .order import assemble_chains, build_top_two


@dataclass
class PipelineResult:
    permutation: Permutation
    graph: SimilarityGraph
    provisional: ProvisionalOrder | None
    total_queries: int
    phase_queries: dict[str, int]
    phase_seconds: dict[str, float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def calls_per_item(self) -> float:
        return self.total_queries / max(1, self.graph.n)


def run_pipeline(oracle, cfg: PipelineConfig | None = None, observer=None) -> PipelineResult:
    """Build the graph, then assemble it into a single chain.

    observer, when given, is called as observer(phase_name, graph) after
    each phase completes; the CLI uses it to dump intermediate graphs.
    Raises ConnectivityStalled with partial state attached when the
    graph cannot be connected. An incomplete chain assembly degrades
    instead of raising: fragments are stitched along the provisional
    layout and reported in diagnostics["fragments"].
    """
    cfg = cfg if cfg is not None else PipelineConfig()
    n = oracle.n
    ledger = oracle.ledger
    seconds: dict[str, float] = {}

    if n == 1:
        return PipelineResult(
            permutation=Permutation([0]),
            graph=SimilarityGraph(1),
            provisional=None,
            total_queries=ledger.total,
            phase_queries=dict(ledger.per_phase),
            phase_seconds=seconds,
        )

    probed = PairSet(n)
    g = SimilarityGraph(n)
    rng = np.random.default_rng(cfg.seed)

    def timed(name):
        class _T:
            def __enter__(self_t):
                self_t.t0 = time.perf_counter()
                self_t.scope = ledger.phase(name)
                self_t.scope.__enter__()
                return self_t

            def __exit__(self_t, *exc):
                self_t.scope.__exit__(*exc)
                seconds[name] = seconds.get(name, 0.0) + time.perf_counter() - self_t.t0
                if observer is not None and not exc[0]:
                    observer(name, g)
                return False

        return _T()

    estimates = None
    if cfg.use_sketch(oracle):
        with timed("survey"):
            survey = survey_positions(oracle, cfg, graph=g, probed=probed)
            estimates = survey.estimates

    with timed("connect"):
        boruvka_connect(
            oracle, cfg, graph=g, probed=probed, rng=rng, sketch=estimates
        )

    with timed("condense"):
        initial = (
            np.argsort(estimates, kind="stable").astype(np.int64)
            if estimates is not None
            else None
        )
        condense_info = condense(g, oracle, cfg, probed=probed, initial_order=initial)

    with timed("order"):
        prov = provisional_order(g)

    with timed("densify"):
        densify_probes = densify(g, prov, oracle, cfg, probed=probed)

    if oracle.kind == "binary":
        # flat acceptance weights carry no ranking; derive one from
        # neighborhood overlap before any greedy selection runs
        with timed("rescore"):
            rescore_by_shared_neighbors(g)

    with timed("assemble"):
        top = build_top_two(g)
        outcome = assemble_chains(g, top)

    if outcome.complete:
        perm = outcome.permutation
    else:
        # relayout on the final graph: densification may have repaired
        # the layers since the provisional sweep was taken
        perm = _stitch_fragments(outcome.chains, provisional_order(g))

    return PipelineResult(
        permutation=perm,
        graph=g,
        provisional=prov,
        total_queries=ledger.total,
        phase_queries=dict(ledger.per_phase),
        phase_seconds=seconds,
        diagnostics={
            "condense_rounds": condense_info.rounds,
            "condense_bounds": condense_info.bounds,
            "densify_probes": densify_probes,
            "assembly_iterations": outcome.iterations,
            "stage_merges": outcome.stage_merges,
            "hubs": len(top.hubs),
            "probed_pairs": probed.count,
            "survey_rounds": 0 if estimates is None else survey.rounds,
            "fragments": 1 if outcome.complete else len(outcome.chains),
            "complete": outcome.complete,
        },
    )


def _stitch_fragments(chains, prov: ProvisionalOrder) -> Permutation:
    """Best-effort total order from leftover chain fragments.

    Fragments are laid end to end along the provisional layout: each is
    oriented so its endpoints follow their provisional ranks, and the
    fragments are concatenated by mean rank. Every junction then costs a
    bounded number of edge edits instead of aborting the whole run.
    """
    rank = np.empty(prov.perm.order.shape[0], dtype=np.int64)
    rank[prov.perm.order] = np.arange(rank.shape[0])
    pieces = []
    for chain in chains:
        items = list(chain)
        if len(items) > 1 and rank[items[0]] > rank[items[-1]]:
            items.reverse()
        pieces.append((float(np.mean(rank[items])), items))
    pieces.sort(key=lambda p: (p[0], p[1][0]))
    flat = [v for _, items in pieces for v in items]
    return Permutation(flat)

"""Command-line frontend: one process per command, files out.

Four subcommands. `order` recovers an ordering, from a synthetic probe
oracle (`--input line:N=500,c=2,eps=0.05`) or from a stored pair-score
CSV, and writes the order plus a JSON report. `montecarlo`, `ablate`,
and `scale` emit their experiment tables as plot-ready CSV.

Settings come from flags, optionally layered over a flat key=value
config file (`--config`); flags win. The effective configuration is
persisted next to the outputs and its hash is embedded in every file,
so a run can be reproduced from its own artifacts. CSV and JSON outputs
are byte-stable for a fixed config and seed; wall-clock numbers go to a
plain-text sidecar instead.

Exit codes: 0 success, 2 parse failure, 3 connectivity stalled,
4 incomplete assembly (partial output still written).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import re
import sys
import time
from dataclasses import dataclass

import numpy as np

from .construct import PipelineConfig
from .core import QueryLedger, unit_line
from .errors import (
    ConnectivityStalled,
    InputFormatError,
    IsolatedVertex,
    RestackError,
)
from .evaluation import (
    MonteCarloConfig,
    default_variants,
    fit_loglog_slope,
    make_synthetic_oracle,
    monte_carlo_fragmentation,
    order_accuracy,
    run_ablation,
    scaling_study,
    write_json_summary,
    write_rows_csv,
    write_timing_sidecar,
)
from .oracle import read_similarity_csv
from .order import assemble_chains
from .pipeline import run_pipeline

_COMMANDS = ("order", "montecarlo", "ablate", "scale")


@dataclass
class RunConfig:
    """Effective settings of one command invocation.

    Serialized to config.txt beside the outputs; feeding that file back
    via --config (with the same command) reproduces the run byte for
    byte. The output directory is deliberately not part of the config,
    so moving results does not change their provenance hash.
    """

    command: str
    input: str | None = None
    seed: int = 0
    K: int | None = None
    c: int | None = None
    rho: float | None = None
    eps: float | None = None
    variant: tuple[str, ...] = ()
    trials: int | None = None
    threads: int = 1
    dump_phase: bool = False
    sizes: tuple[int, ...] | None = None

    def to_text(self) -> str:
        pairs: list[tuple[str, object]] = [("command", self.command)]
        for key in ("input", "seed", "K", "c", "rho", "eps", "trials", "threads"):
            val = getattr(self, key)
            if val is not None:
                pairs.append((key, val))
        if self.variant:
            pairs.append(("variant", ",".join(self.variant)))
        if self.sizes:
            pairs.append(("sizes", ",".join(str(s) for s in self.sizes)))
        pairs.append(("dump_phase", int(self.dump_phase)))
        return "".join(f"{k}={v}\n" for k, v in pairs)

    def as_dict(self) -> dict[str, str]:
        return dict(
            line.split("=", 1) for line in self.to_text().splitlines()
        )

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


_INT_KEYS = ("seed", "K", "c", "trials", "threads")
_FLOAT_KEYS = ("rho", "eps")


def read_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read config {path}: {exc}") from None
    out: dict[str, str] = {}
    for no, line in enumerate(raw, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise InputFormatError(f"expected key=value, got {text!r}", no)
        key, _, val = text.partition("=")
        out[key.strip()] = val.strip()
    return out


def _coerce(key: str, text: str):
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        if key == "sizes":
            return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise InputFormatError(f"config key {key} needs a number, got {text!r}") from None
    if key == "variant":
        return tuple(t.strip() for t in text.split(",") if t.strip())
    if key == "dump_phase":
        return text not in ("", "0", "false", "False")
    return text


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_vals = read_config_file(args.config) if args.config else {}
    if "command" in file_vals and file_vals["command"] != args.command:
        raise InputFormatError(
            f"config file is for {file_vals['command']!r}, "
            f"command line says {args.command!r}"
        )
    rc = RunConfig(command=args.command)
    for key in (
        "input", "seed", "K", "c", "rho", "eps",
        "variant", "trials", "threads", "dump_phase", "sizes",
    ):
        cli_val = getattr(args, key)
        if key == "variant" and cli_val is not None:
            cli_val = tuple(cli_val)
        if key == "sizes" and cli_val is not None:
            cli_val = _coerce("sizes", cli_val)
        if cli_val is not None:
            setattr(rc, key, cli_val)
        elif key in file_vals:
            setattr(rc, key, _coerce(key, file_vals[key]))
    return rc


# -- synthetic input grammar ------------------------------------------

_GENERATORS = ("line",)


def parse_synthetic_spec(text: str) -> dict:
    """`line:N=500,c=2,eps=0.05` -> typed parameter dict."""
    kind, _, body = text.partition(":")
    kind = kind.strip()
    if kind not in _GENERATORS:
        raise InputFormatError(f"unknown synthetic generator {kind!r}")
    out: dict[str, object] = {}
    for part in body.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise InputFormatError(f"expected key=value in synthetic spec, got {part!r}")
        key, _, val = part.partition("=")
        key, val = key.strip(), val.strip()
        try:
            if key == "N":
                out["n"] = int(val)
            elif key == "c":
                out["c"] = int(val)
            elif key == "rho":
                out["rho"] = float(val)
            elif key == "eps":
                out["eps"] = float(val)
            else:
                raise InputFormatError(f"unknown synthetic key {key!r}")
        except ValueError:
            raise InputFormatError(f"bad value for {key!r}: {val!r}") from None
    if "n" not in out:
        raise InputFormatError("synthetic spec needs N=<count>")
    return out


def _is_synthetic(text: str) -> bool:
    return re.match(r"^[A-Za-z]+:", text) is not None


def _variant_patch(labels: tuple[str, ...], c: int) -> dict:
    """Fold named pipeline variants into config overrides; order applies
    at most one, ablate filters its table with them."""
    table = {v.label.lower(): v for v in default_variants()}
    patch: dict = {}
    for label in labels:
        if label.lower() not in table:
            known = ", ".join(sorted(table))
            raise InputFormatError(f"unknown variant {label!r} (known: {known})")
        patch.update(table[label.lower()].resolved(c))
    return patch


# -- order -------------------------------------------------------------


def _write_order_file(path: str, items) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(f"{int(item)}\n")


def cmd_order(rc: RunConfig, out_dir: str) -> int:
    if not rc.input:
        raise InputFormatError("order needs --input (CSV path or synthetic spec)")
    if _is_synthetic(rc.input):
        return _order_synthetic(rc, out_dir)
    return _order_matrix(rc, out_dir)


def _order_synthetic(rc: RunConfig, out_dir: str) -> int:
    spec = parse_synthetic_spec(rc.input)
    rho = rc.rho if rc.rho is not None else spec.get("rho")
    if rho is None:
        rho = float(rc.c if rc.c is not None else spec.get("c", 2))
    eps = rc.eps if rc.eps is not None else spec.get("eps", 0.0)

    rng = np.random.default_rng(rc.seed)
    truth = unit_line(spec["n"], rng)
    ledger = QueryLedger()
    oracle = make_synthetic_oracle(truth, float(rho), float(eps), rc.seed, ledger)

    merged: dict = {"seed": rc.seed, "threads": rc.threads}
    if rc.K is not None:
        merged["K"] = rc.K
    merged.update(_variant_patch(rc.variant, oracle.cfg.c))
    cfg = PipelineConfig(**merged)

    phases: list[dict] = []

    def observer(name: str, g) -> None:
        phases.append(
            {"phase": name, "edges": len(g.edge_keys()), "queries": ledger.total}
        )

    t0 = time.perf_counter()
    try:
        res = run_pipeline(oracle, cfg, observer=observer if rc.dump_phase else None)
    except ConnectivityStalled as exc:
        _persist_config(rc, out_dir)
        write_json_summary(
            os.path.join(out_dir, "report.json"),
            {
                "command": "order",
                "config": rc.as_dict(),
                "config_sha256": rc.sha256,
                "mode": "synthetic",
                "n": spec["n"],
                "error": {"type": "ConnectivityStalled", "message": str(exc)},
            },
        )
        print(f"error: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0

    acc = order_accuracy(res.permutation, truth.perm).accuracy
    complete = bool(res.diagnostics.get("complete", True))
    _write_order_file(os.path.join(out_dir, "order.txt"), res.permutation.order)
    _persist_config(rc, out_dir)
    write_json_summary(
        os.path.join(out_dir, "report.json"),
        {
            "command": "order",
            "config": rc.as_dict(),
            "config_sha256": rc.sha256,
            "mode": "synthetic",
            "n": spec["n"],
            "rho": float(rho),
            "eps": float(eps),
            "accuracy": acc,
            "complete": complete,
            "total_queries": res.total_queries,
            "calls_per_item": res.calls_per_item,
            "phase_queries": res.phase_queries,
            "diagnostics": res.diagnostics,
            "permutation_file": "order.txt",
        },
    )
    with open(
        os.path.join(out_dir, "timings.txt"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        for name, secs in res.phase_seconds.items():
            fh.write(f"{name}: {secs:.3f}s\n")
        fh.write(f"total: {wall:.3f}s\n")
    if rc.dump_phase:
        write_json_summary(
            os.path.join(out_dir, "phases.json"),
            {"config_sha256": rc.sha256, "phases": phases},
        )
    print(
        f"order: n={spec['n']} accuracy={acc:.4f} "
        f"queries={res.total_queries} -> {out_dir}/order.txt"
    )
    return 0 if complete else 4


def _order_matrix(rc: RunConfig, out_dir: str) -> int:
    store = read_similarity_csv(rc.input)
    g = store.to_graph()
    t0 = time.perf_counter()
    try:
        res = assemble_chains(g)
    except IsolatedVertex as exc:
        _persist_config(rc, out_dir)
        write_json_summary(
            os.path.join(out_dir, "report.json"),
            {
                "command": "order",
                "config": rc.as_dict(),
                "config_sha256": rc.sha256,
                "mode": "matrix",
                "n": store.n,
                "error": {"type": "IsolatedVertex", "message": str(exc)},
            },
        )
        print(f"error: {exc}", file=sys.stderr)
        return 4
    wall = time.perf_counter() - t0

    if res.complete:
        items = list(res.permutation.order)
    else:
        items = [v for chain in res.chains for v in chain]
    _write_order_file(os.path.join(out_dir, "order.txt"), items)
    _persist_config(rc, out_dir)
    write_json_summary(
        os.path.join(out_dir, "report.json"),
        {
            "command": "order",
            "config": rc.as_dict(),
            "config_sha256": rc.sha256,
            "mode": "matrix",
            "n": store.n,
            "complete": res.complete,
            "fragments": len(res.chains),
            "iterations": res.iterations,
            "stage_merges": res.stage_merges,
            "permutation_file": "order.txt",
        },
    )
    with open(
        os.path.join(out_dir, "timings.txt"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        fh.write(f"total: {wall:.3f}s\n")
    print(
        f"order: n={store.n} fragments={len(res.chains)} -> {out_dir}/order.txt"
    )
    return 0 if res.complete else 4


# -- experiment tables -------------------------------------------------


def cmd_montecarlo(rc: RunConfig, out_dir: str) -> int:
    cfg = MonteCarloConfig(
        trials=rc.trials if rc.trials is not None else 5000, seed=rc.seed
    )
    t0 = time.perf_counter()
    rows = monte_carlo_fragmentation(cfg)
    wall = time.perf_counter() - t0
    _persist_config(rc, out_dir)
    path = os.path.join(out_dir, "montecarlo.csv")
    write_rows_csv(
        path,
        rows,
        columns=["p", "method", "recovery", "ci_low", "ci_high", "trials"],
        comment=f"config_sha256={rc.sha256}",
    )
    with open(
        os.path.join(out_dir, "timings.txt"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        fh.write(f"total: {wall:.3f}s\n")
    print(f"montecarlo: {len(rows)} rows -> {path}")
    return 0


def cmd_ablate(rc: RunConfig, out_dir: str) -> int:
    variants = default_variants()
    if rc.variant:
        table = {v.label.lower(): v for v in variants}
        picked = []
        for label in rc.variant:
            if label.lower() not in table:
                known = ", ".join(sorted(table))
                raise InputFormatError(f"unknown variant {label!r} (known: {known})")
            picked.append(table[label.lower()])
        variants = picked
    base = PipelineConfig(threads=rc.threads)
    rows = run_ablation(
        variants=variants,
        sizes=rc.sizes if rc.sizes else (500,),
        eps=rc.eps if rc.eps is not None else 0.05,
        rho=rc.rho if rc.rho is not None else 2.5,
        seeds=rc.trials if rc.trials is not None else 3,
        base=base,
    )
    _persist_config(rc, out_dir)
    path = os.path.join(out_dir, "ablation.csv")
    write_rows_csv(
        path,
        rows,
        columns=["variant", "n", "edge_edit_rate", "calls_per_item", "seeds", "errors"],
        comment=f"config_sha256={rc.sha256}",
    )
    write_timing_sidecar(os.path.join(out_dir, "timings.txt"), rows)
    print(f"ablate: {len(rows)} rows -> {path}")
    return 0


def cmd_scale(rc: RunConfig, out_dir: str) -> int:
    sizes = rc.sizes if rc.sizes else (1000, 10000, 100000)
    rows = scaling_study(
        sizes,
        rho=rc.rho if rc.rho is not None else 2.5,
        eps=rc.eps if rc.eps is not None else 0.05,
        seed=rc.seed,
        base=PipelineConfig(seed=rc.seed, threads=rc.threads),
    )
    _persist_config(rc, out_dir)
    path = os.path.join(out_dir, "scale.csv")
    write_rows_csv(
        path,
        rows,
        columns=["n", "queries", "calls_per_item", "accuracy"],
        comment=f"config_sha256={rc.sha256}",
    )
    write_timing_sidecar(os.path.join(out_dir, "timings.txt"), rows)
    slope = fit_loglog_slope(rows) if len(rows) > 1 else float("nan")
    print(f"scale: {len(rows)} rows, query slope {slope:.3f} -> {path}")
    return 0


def _persist_config(rc: RunConfig, out_dir: str) -> None:
    with open(
        os.path.join(out_dir, "config.txt"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        fh.write(rc.to_text())


# -- argument plumbing -------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restack",
        description="Query-efficient recovery of a linear order.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_by_command = {
        "order": "recover one ordering and write order.txt + report.json",
        "montecarlo": "fragmented-chain recovery table (montecarlo.csv)",
        "ablate": "pipeline variant comparison table (ablation.csv)",
        "scale": "query growth over instance sizes (scale.csv)",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=help_by_command[name])
        p.add_argument("--input", help="similarity CSV path or synthetic spec like line:N=500,c=2,eps=0.05")
        p.add_argument("--out-dir", dest="out_dir", default=".", help="output directory (default: current)")
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--seed", type=int, help="master RNG seed (default 0)")
        p.add_argument("--K", type=int, help="densification half-window in ranks")
        p.add_argument("--c", type=int, help="short-range radius in true positions")
        p.add_argument("--rho", type=float, help="oracle acceptance radius (defaults to c)")
        p.add_argument("--eps", type=float, help="relative distance noise in [0, 1)")
        p.add_argument("--variant", action="append", help="named pipeline variant; repeatable for ablate")
        p.add_argument("--trials", type=int, help="montecarlo trials, or seeds per ablate cell")
        p.add_argument("--threads", type=int, help="worker cap for batched probes (default 1)")
        p.add_argument("--dump-phase", dest="dump_phase", action="store_true", default=None, help="also write per-phase graph stats (phases.json)")
        p.add_argument("--sizes", help="comma-separated instance sizes for ablate/scale")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        rc = build_run_config(args)
        out_dir = args.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if rc.command == "order":
            return cmd_order(rc, out_dir)
        if rc.command == "montecarlo":
            return cmd_montecarlo(rc, out_dir)
        if rc.command == "ablate":
            return cmd_ablate(rc, out_dir)
        return cmd_scale(rc, out_dir)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConnectivityStalled as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RestackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: single runs and parameter sweeps."""

from __future__ import annotations

import argparse
import csv
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Any, Optional, Sequence

from .checks import InvariantViolation
from .config import FIELD_TYPES, RunConfig, coerce, resolve
from .engine import SchedulingError, derive_seed
from .metrics import MetricsError
from .network import TransportError
from .simulation import Simulation
from .tangle import write_dag
from .topology import ConfigError

log = logging.getLogger("dagsim")

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


INDEX_HEADER = ["key", "value", "replicate", "seed", "dir", "blocks", "confirmed",
                "mean_confirmation_ms", "mean_tip_pool", "consensus_time_ms"]


class UsageError(ConfigError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dagsim",
        description="Simulate a DAG ledger with Approval Weight consensus over a P2P network.")
    p.add_argument("--config", metavar="PATH", help="key = value file (or a run_meta.csv)")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--zipf", type=float)
    p.add_argument("--rewire", type=float)
    p.add_argument("--k-neighbors", type=int)
    p.add_argument("--dmin-ms", type=float)
    p.add_argument("--dmax-ms", type=float)
    p.add_argument("--ploss", type=float)
    p.add_argument("--tips", type=int)
    p.add_argument("--bps", type=float)
    p.add_argument("--imif", choices=["poisson", "deterministic"])
    p.add_argument("--theta", type=float)
    p.add_argument("--scenario", choices=["none", "bait-and-switch"])
    p.add_argument("--adv-weight", type=float)
    p.add_argument("--adv-count", type=int)
    p.add_argument("--adv-delay-ms", type=float)
    p.add_argument("--pacing", type=float, help="wall-clock seconds per virtual second")
    p.add_argument("--sample-interval-ms", type=float)
    p.add_argument("--retry-interval-ms", type=float)
    p.add_argument("--attack-start-s", type=float)
    p.add_argument("--step-interval-ms", type=float)
    p.add_argument("--switch-margin", type=float)
    p.add_argument("--no-self-support", dest="self_support", action="store_const", const=False,
                   help="a block's own issuer does not count towards its Approval Weight")
    p.add_argument("--exclude-own-vote", dest="own_vote_in_opinion", action="store_const",
                   const=False, help="ignore a node's own vote when forming its opinion")
    p.add_argument("--stop-on-consensus", action="store_const", const=True)
    p.add_argument("--full-local-confirmations", action="store_const", const=True)
    p.add_argument("--debug", action="store_const", const=True,
                   help="assert runtime invariants (slower)")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...")
    p.add_argument("--seeds-per-point", type=int, default=1)
    p.add_argument("--workers", type=int, default=1, help="parallel sweep children")
    p.add_argument("--dump-graph", action="store_true", help="write graph.txt edge list")
    p.add_argument("--dump-dag", action="store_true", help="write one DAG file per node")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            out[f.name] = v
    return out


def parse_config(argv: Sequence[str]) -> tuple[RunConfig, argparse.Namespace]:
    """Flags override file values, which override defaults."""
    args = build_parser().parse_args(argv)
    return resolve(overrides_from_args(args), args.config), args


def parse_sweep(text: str) -> tuple[str, list[Any]]:
    if "=" not in text:
        raise UsageError(f"--sweep expects KEY=V1,V2,..., got {text!r}")
    key, values = text.split("=", 1)
    key = key.strip().replace("-", "_")
    if key not in FIELD_TYPES or key == "seed":
        raise UsageError(f"cannot sweep over {key!r}")
    vals = [coerce(key, v) for v in values.split(",") if v.strip()]
    if not vals:
        raise UsageError("--sweep needs at least one value")
    return key, vals


def summarize(sim: Simulation) -> dict[str, str]:
    lat = sim.metrics.confirmation_latencies(sim.ledger)
    res = sim.consensus.resolution
    return {
        "blocks": str(len(sim.ledger) - 1),
        "confirmed": str(len(lat)),
        "mean_confirmation_ms": f"{statistics.fmean(lat) / 1000:.3f}" if lat else "",
        "mean_tip_pool": f"{sim.tip_pool_mean():.3f}",
        "consensus_time_ms": "" if res is None else str(res.consensus_time // 1000),
    }


def run(cfg: RunConfig, out_dir: str | Path, dump_graph: bool = False,
        dump_dag: bool = False) -> dict[str, str]:
    """Build, run and finalize one simulation; returns its summary."""
    t0 = time.perf_counter()
    sim = Simulation(cfg)
    sim.run()
    out = Path(out_dir)
    sim.finalize(out)
    if dump_graph:
        sim.graph.write_edge_list(out / "graph.txt")
    if dump_dag:
        (out / "dag").mkdir(exist_ok=True)
        for node in sim.nodes:
            write_dag(node.tangle, out / "dag" / f"node_{node.id}.txt")
    summary = summarize(sim)
    log.info("%s: %s blocks, %s confirmed, mean confirmation %s ms, %.1fs wall",
             out, summary["blocks"], summary["confirmed"], summary["mean_confirmation_ms"],
             time.perf_counter() - t0)
    return summary


def _child(job: tuple[RunConfig, str]) -> dict[str, str]:
    cfg, out = job
    return run(cfg, out)


def run_sweep(base: RunConfig, key: str, values: list[Any], seeds_per_point: int,
              out_dir: str | Path, workers: int = 1) -> Path:
    """One isolated child run per (value, replicate); writes ``sweep_index.csv``."""
    out = Path(out_dir)
    jobs, rows = [], []
    for vi, value in enumerate(values):
        for rep in range(seeds_per_point):
            seed = derive_seed(base.seed, vi, rep)
            cfg = base.replace(**{key: value, "seed": seed}).validate()
            child = out / f"{key}={value}" / f"rep_{rep:03d}"
            jobs.append((cfg, str(child)))
            rows.append([key, str(value), str(rep), str(seed), str(child.relative_to(out))])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_child, jobs))
    else:
        summaries = [_child(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    index = out / "sweep_index.csv"
    with open(index, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        for row, summary in zip(rows, summaries):
            w.writerow(row + [summary[h] for h in INDEX_HEADER[5:]])
    return index


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg, args = parse_config(argv)
        sweep = parse_sweep(args.sweep) if args.sweep else None
        if args.seeds_per_point < 1:
            raise UsageError("--seeds-per-point must be >= 1")
    except ConfigError as exc:
        print(f"dagsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if sweep is not None:
            key, values = sweep
            index = run_sweep(cfg, key, values, args.seeds_per_point, args.out, args.workers)
            print(f"wrote {index}")
        else:
            s = run(cfg, args.out, args.dump_graph, args.dump_dag)
            print(" ".join(f"{k}={v}" for k, v in s.items()))
    except ConfigError as exc:
        print(f"dagsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, SchedulingError, TransportError) as exc:
        print(f"dagsim: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except MetricsError as exc:
        msg = str(exc)
        print(f"dagsim: {msg}", file=sys.stderr)
        return EXIT_INVARIANT if "twice" in msg else EXIT_IO
    return EXIT_OK

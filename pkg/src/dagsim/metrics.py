"""Confirmation, tip-pool and consensus measurements, written as CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .engine import GLOBAL
from .tangle import Ledger

CONFIRMATIONS_HEADER = ["block_id", "issuer", "issued_ms", "global_confirmed_ms",
                        "local_min_ms", "local_mean_ms", "local_max_ms", "unconfirmed_nodes"]
TIPS_HEADER = ["time_ms", "node_id", "tip_count"]
CONSENSUS_HEADER = ["seed", "q_a", "members", "winner", "consensus_time_ms"]
META_HEADER = ["key", "value"]
LOCAL_HEADER = ["block_id", "node_id", "confirmed_ms"]


class MetricsError(RuntimeError):
    pass


def _ms(us: Optional[int]) -> str:
    return "" if us is None else str(us // 1000)


@dataclass
class ConsensusRecord:
    seed: int
    q_a: float
    members: int
    winner: Optional[int]
    consensus_time: Optional[int]  # microseconds

    def row(self) -> list[str]:
        return [str(self.seed), repr(self.q_a), str(self.members),
                "" if self.winner is None else str(self.winner), _ms(self.consensus_time)]


class MetricsSink:
    def __init__(self, n_nodes: int, full_local: bool = False):
        self.n_nodes = n_nodes
        self.full_local = full_local
        self.global_confirmed: dict[int, int] = {}
        # block id -> [count, sum, min, max] of local confirmation instants
        self.local: dict[int, list[int]] = {}
        self.local_rows: list[tuple[int, int, int]] = []
        self._seen_local: set[int] = set()
        self.tip_samples: list[tuple[int, int, int]] = []
        self.consensus: list[ConsensusRecord] = []

    def on_confirmed(self, bid: int, observer: int, at: int) -> None:
        """Record a confirmation; each (block, observer) pair may be reported once."""
        if observer == GLOBAL:
            if bid in self.global_confirmed:
                raise MetricsError(f"block {bid} globally confirmed twice")
            self.global_confirmed[bid] = at
            return
        key = bid * (self.n_nodes + 1) + observer
        if key in self._seen_local:
            raise MetricsError(f"block {bid} confirmed twice at node {observer}")
        self._seen_local.add(key)
        agg = self.local.get(bid)
        if agg is None:
            self.local[bid] = [1, at, at, at]
        else:
            agg[0] += 1
            agg[1] += at
            if at < agg[2]:
                agg[2] = at
            if at > agg[3]:
                agg[3] = at
        if self.full_local:
            self.local_rows.append((bid, observer, at))

    def sample_tip_pools(self, now: int, counts: Iterable[tuple[int, int]]) -> None:
        for node_id, count in counts:
            self.tip_samples.append((now, node_id, count))

    def record_consensus(self, record: ConsensusRecord) -> None:
        self.consensus.append(record)

    def confirmation_latencies(self, ledger: Ledger, issued_before: Optional[int] = None) -> list[int]:
        """Global confirmation latency (us) of every confirmed issued block."""
        out = []
        for b in ledger.issued():
            if issued_before is not None and b.issued_at >= issued_before:
                continue
            at = self.global_confirmed.get(b.id)
            if at is not None:
                out.append(at - b.issued_at)
        return out

    def finalize(self, out_dir: str | Path, ledger: Ledger, meta: dict[str, str]) -> list[Path]:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise MetricsError(f"cannot create output directory {out}: {exc}") from exc
        paths = []

        def write(name, header, rows):
            path = out / name
            try:
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(header)
                    w.writerows(rows)
            except OSError as exc:
                raise MetricsError(f"cannot write {path}: {exc}") from exc
            paths.append(path)

        write("confirmations.csv", CONFIRMATIONS_HEADER, self._confirmation_rows(ledger))
        write("tips.csv", TIPS_HEADER,
              ([t // 1000, n, c] for t, n, c in sorted(self.tip_samples)))
        write("consensus.csv", CONSENSUS_HEADER,
              (r.row() for r in sorted(self.consensus, key=lambda r: r.seed)))
        write("run_meta.csv", META_HEADER, meta.items())
        if self.full_local:
            write("local_confirmations.csv", LOCAL_HEADER,
                  ([b, n, at // 1000] for b, n, at in sorted(self.local_rows)))
        return paths

    def _confirmation_rows(self, ledger: Ledger):
        for b in ledger.issued():
            agg = self.local.get(b.id)
            if agg is None:
                local = ["", "", "", str(self.n_nodes)]
            else:
                count, total, lo, hi = agg
                local = [_ms(lo), _ms(total // count), _ms(hi), str(self.n_nodes - count)]
            yield [b.id, b.issuer, _ms(b.issued_at), _ms(self.global_confirmed.get(b.id)), *local]

"""Wires engine, topology, transport, nodes, consensus, adversary and metrics
into one run."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from . import __version__
from .adversary import BaitAndSwitch, place_adversary
from .checks import InvariantChecker
from .config import RunConfig
from .consensus import (ApprovalTracker, ConsensusMonitor, VoteBook, threshold_units,
                        weight_units)
from .engine import GLOBAL, Engine, EventKind, SimEvent, ms_to_us
from .metrics import ConsensusRecord, MetricsSink
from .network import Message, MsgKind, Transport
from .node import NodeAgent
from .tangle import AttachStatus, Block, Ledger, LocalTangle, select_tips
from .topology import PeerGraph, TopologyConfig, generate_watts_strogatz, zipf_weights

log = logging.getLogger(__name__)


class Simulation:
    def __init__(self, cfg: RunConfig, graph: Optional[PeerGraph] = None,
                 weights: Optional[list[float]] = None, record_log: bool = False,
                 dedup: bool = True, auto_issue: bool = True):
        cfg.validate(topology=graph is None)
        self.cfg = cfg
        self.issuance = cfg.issuance
        self.engine = Engine(cfg.seed, cfg.pacing, cfg.sample_interval_ms, record_log=record_log)
        self.auto_issue = auto_issue

        honest = zipf_weights(cfg.nodes, cfg.zipf) if weights is None else list(weights)
        self.weights, self.adversaries = place_adversary(honest, cfg.adversary)
        n = len(self.weights)
        if graph is None:
            topo = TopologyConfig(n, cfg.k_neighbors, cfg.rewire, cfg.zipf)
            graph = generate_watts_strogatz(topo, self.engine.rng_stream("topology"))
        if graph.n != n:
            raise ValueError(f"graph has {graph.n} nodes, weights have {n}")
        self.graph = graph

        adv = set(self.adversaries)
        # regular issuance is shared among honest nodes only; adversary nodes
        # issue nothing but strategy blocks
        self._honest_total = sum(w for i, w in enumerate(self.weights) if i not in adv)
        self.ledger = Ledger()
        self.units = weight_units(self.weights)
        theta = cfg.theta
        self.transport = Transport(self.engine, graph, cfg.network, self.adversaries, dedup=dedup)
        self.nodes = [
            NodeAgent(i, self.weights[i], graph.neighbors(i), LocalTangle(self.ledger),
                      ApprovalTracker(self.ledger, self.units, theta, cfg.self_support),
                      VoteBook(self.units, i, cfg.own_vote_in_opinion), adversary=i in adv)
            for i in range(n)
        ]
        self.transport.bind(lambda node, bid: bid in self.nodes[node].tangle.store)

        self.global_approval = ApprovalTracker(self.ledger, self.units, theta, cfg.self_support)
        self.global_votes = VoteBook(self.units)
        self.consensus = ConsensusMonitor(self.ledger, self.global_votes,
                                          threshold_units(theta, sum(self.units)))
        self.metrics = MetricsSink(n, cfg.full_local_confirmations)
        self.adversary = (BaitAndSwitch(self, cfg.adversary, self.adversaries)
                          if self.adversaries else None)
        self.checker = InvariantChecker(self) if cfg.debug else None

        self.duration_us = ms_to_us(cfg.duration_ms)
        self.end_us = self.duration_us + ms_to_us(cfg.drain_ms)
        self.sample_us = ms_to_us(cfg.sample_interval_ms)
        self._issue_rng = self.engine.rng_stream("issuance")
        self._tip_rng = self.engine.rng_stream("tip-selection")
        self._started = False

        e = self.engine
        e.on(EventKind.DELIVER_BLOCK, self._on_deliver)
        e.on(EventKind.DELIVER_RESPONSE, self._on_deliver)
        e.on(EventKind.DELIVER_REQUEST, self._on_request)
        e.on(EventKind.ISSUE_BLOCK, self._on_issue)
        e.on(EventKind.ADVERSARY_STEP, self._on_adversary)
        e.on(EventKind.METRICS_SAMPLE, self._on_sample)
        e.on(EventKind.RETRY_SOLIDIFICATION, self._on_retry)
        e.on(EventKind.END_OF_RUN, self._on_end)

    # --- issuance -------------------------------------------------------

    def mean_interval_us(self, node_id: int) -> float:
        share = self.weights[node_id] / self._honest_total
        return 1e6 / (self.issuance.bps * share)

    def _next_interval(self, node_id: int, first: bool = False) -> int:
        mean = self.mean_interval_us(node_id)
        if self.issuance.imif == "poisson":
            return int(round(self._issue_rng.expovariate(1.0) * mean))
        if first:
            return int(round(self._issue_rng.random() * mean))
        return int(round(mean))

    def _schedule_issue(self, node_id: int, first: bool = False) -> None:
        at = self.engine.now + self._next_interval(node_id, first)
        if at < self.duration_us:
            self.engine.schedule(at, EventKind.ISSUE_BLOCK, node_id)

    def issue_block(self, node_id: int, parents=None, conflict: bool = False) -> Block:
        """Create a block at ``node_id`` now, book it locally and gossip it."""
        node = self.nodes[node_id]
        if parents is None:
            parents = select_tips(node.tangle, node.opinion(), self.issuance.n_tips,
                                  self._tip_rng, heaviness=node.approval.approval_units)
        block = self.ledger.mint(node_id, parents, self.engine.now, conflict)
        self._observe_globally(block)
        self.accept(node, block, sender=None)
        return block

    def inject_conflict(self, node_id: int, parents=None) -> Block:
        """Issue a fresh conflict member at ``node_id`` on conflict-free tips."""
        node = self.nodes[node_id]
        if parents is None:
            pool = sorted(node.tangle.childless[None]) or [0]
            k = min(self.issuance.n_tips, len(pool))
            parents = sorted(self._tip_rng.sample(pool, k))
        return self.issue_block(node_id, parents, conflict=True)

    def _observe_globally(self, block: Block) -> None:
        now = self.engine.now
        for bid in self.global_approval.update(block, now):
            self.metrics.on_confirmed(bid, GLOBAL, now)
        changed = self.global_votes.record(block, self.ledger.support[block.id])
        res = self.consensus.check(now)
        if res is not None:
            self.metrics.record_consensus(ConsensusRecord(
                self.cfg.seed, self.cfg.adv_weight if self.adversaries else 0.0,
                res.members, res.winner, res.consensus_time))
            if self.cfg.stop_on_consensus:
                self.engine.stop()
            return
        if self.adversary is not None and changed:
            self.adversary.on_vote_change(now)

    # --- block processing ----------------------------------------------

    def accept(self, node: NodeAgent, block: Block, sender: Optional[int]) -> AttachStatus:
        res = node.tangle.attach(block)
        self.transport.delivered(node.id, block.id)
        if res.status is AttachStatus.PENDING:
            node.senders[block.id] = sender
            self.transport.request_missing(node, res.missing)
            return res.status
        if res.status is not AttachStatus.BOOKED:
            return res.status
        now = self.engine.now
        ledger = self.ledger
        approval = node.approval
        metrics = self.metrics
        for bid in res.booked:
            b = ledger.blocks[bid]
            for c in approval.update(b, now):
                metrics.on_confirmed(c, node.id, now)
            node.votes.record(b, ledger.support[bid])
            origin = sender if bid == block.id else node.senders.pop(bid, None)
            self.transport.gossip_block(node, b, exclude=origin)
        return res.status

    # --- event handlers -------------------------------------------------

    def _on_deliver(self, ev: SimEvent) -> None:
        msg: Message = ev.payload
        self.accept(self.nodes[ev.target], msg.body, msg.sender)

    def _on_request(self, ev: SimEvent) -> None:
        self.transport.respond_request(self.nodes[ev.target], ev.payload)

    def _on_retry(self, ev: SimEvent) -> None:
        self.transport.retry(self.nodes[ev.target])

    def _on_issue(self, ev: SimEvent) -> None:
        node = self.nodes[ev.target]
        self.issue_block(node.id)
        self._schedule_issue(node.id)

    def _on_adversary(self, ev: SimEvent) -> None:
        self.adversary.step(self.engine.now, ev.payload)

    def _on_sample(self, ev: SimEvent) -> None:
        now = self.engine.now
        self.metrics.sample_tip_pools(now, ((n.id, n.tip_pool_size()) for n in self.nodes))
        if self.checker is not None:
            self.checker.check_step()
        nxt = now + self.sample_us
        if nxt < self.duration_us:
            self.engine.schedule(nxt, EventKind.METRICS_SAMPLE)

    def _on_end(self, ev: SimEvent) -> None:
        self.engine.stop()

    # --- driver -----------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        e = self.engine
        e.schedule(0, EventKind.METRICS_SAMPLE)
        if self.auto_issue:
            for node in self.nodes:
                if not node.adversary:
                    self._schedule_issue(node.id, first=True)
        if self.adversary is not None:
            self.adversary.schedule_start()
        e.schedule(self.end_us, EventKind.END_OF_RUN)

    def run(self) -> "Simulation":
        self.start()
        self.engine.run_until(self.end_us)
        if self.checker is not None:
            self.checker.check_step()
            self.checker.check_final()
        if self.consensus.resolution is None and self.ledger.conflict_blocks:
            self.metrics.record_consensus(ConsensusRecord(
                self.cfg.seed, self.cfg.adv_weight if self.adversaries else 0.0,
                len(self.global_votes.members), None, None))
        return self

    def meta(self) -> dict[str, str]:
        meta = self.cfg.echo()
        meta["version"] = __version__
        return meta

    def finalize(self, out_dir: str | Path) -> list[Path]:
        return self.metrics.finalize(out_dir, self.ledger, self.meta())

    # --- summaries ----------------------------------------------------------

    def tip_pool_mean(self, after_us: int = 0) -> float:
        vals = [c for t, _, c in self.metrics.tip_samples if t >= after_us]
        return sum(vals) / len(vals) if vals else float("nan")

    def permanently_missing(self) -> int:
        issued = len(self.ledger)
        return sum(issued - len(n.tangle.solid) for n in self.nodes)

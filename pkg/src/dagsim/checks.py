"""Runtime invariant assertions for debug runs."""

from __future__ import annotations

import random
from typing import TYPE_CHECKING

from .tangle import GENESIS, LocalTangle

if TYPE_CHECKING:
    from .simulation import Simulation


class InvariantViolation(AssertionError):
    pass


def _fail(msg: str) -> None:
    raise InvariantViolation(msg)


def replay_equivalent(tangle: LocalTangle, rng: random.Random) -> bool:
    """Re-deliver the node's stored blocks in random order to a fresh replica
    and compare the resulting store/solid/booked sets."""
    blocks = [tangle.store[b] for b in tangle.store if b != GENESIS]
    rng.shuffle(blocks)
    fresh = LocalTangle(tangle.ledger)
    for b in blocks:
        fresh.attach(b)
    return (fresh.store.keys() == tangle.store.keys() and fresh.solid == tangle.solid
            and set(fresh.booked) == set(tangle.booked))


class InvariantChecker:
    """Compares successive snapshots of every observer's state.

    Checked: AW and confirmation monotonicity, causal closure of booked sets,
    single-vote accounting and the adversary weight cap; at the end also
    permutation-replay equivalence of attach/solidify.
    """

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.checks = 0
        self._covered = [dict() for _ in range(len(sim.nodes) + 1)]
        self._confirmed = [0] * (len(sim.nodes) + 1)
        self._booked_upto = [0] * len(sim.nodes)

    def _observers(self):
        for i, n in enumerate(self.sim.nodes):
            yield i, n.approval, n.votes
        yield len(self.sim.nodes), self.sim.global_approval, self.sim.global_votes

    def check_step(self) -> None:
        self.checks += 1
        sim = self.sim
        total = sum(sim.units)
        for i, approval, votes in self._observers():
            prev = self._covered[i]
            for issuer, bits in prev.items():
                if bits & ~approval.covered.get(issuer, 0):
                    _fail(f"observer {i}: supporter set shrank for issuer {issuer}")
            self._covered[i] = dict(approval.covered)
            if self._confirmed[i] & ~approval.confirmed_mask:
                _fail(f"observer {i}: a confirmed block reverted")
            self._confirmed[i] = approval.confirmed_mask
            self._check_votes(i, votes, total)
        for i, node in enumerate(sim.nodes):
            t = node.tangle
            for bid in t.booked[self._booked_upto[i]:]:
                if bid not in t.solid:
                    _fail(f"node {i}: booked block {bid} is not solid")
                for p in t.store[bid].parents:
                    if p not in t.solid:
                        _fail(f"node {i}: booked block {bid} has unbooked parent {p}")
            self._booked_upto[i] = len(t.booked)
        if sim.adversary is not None:
            adv = sim.adversary.adversary_weight(sim.global_votes)
            cap = sum(sim.units[a] for a in sim.adversaries)
            if adv > cap:
                _fail(f"adversary vote weight {adv} exceeds its share {cap}")

    def _check_votes(self, i: int, votes, total: int) -> None:
        recomputed: dict[int, int] = {}
        for issuer, (cid, _) in votes.votes.items():
            recomputed[cid] = recomputed.get(cid, 0) + votes.units[issuer]
        if recomputed != votes.weights:
            _fail(f"observer {i}: conflict weights disagree with latest votes")
        if sum(votes.weights.values()) > total:
            _fail(f"observer {i}: conflict weights exceed total weight")

    def check_final(self, sample: int = 5) -> None:
        rng = random.Random(self.sim.cfg.seed)
        nodes = self.sim.nodes
        picks = rng.sample(range(len(nodes)), min(sample, len(nodes)))
        for i in picks:
            if not replay_equivalent(nodes[i].tangle, rng):
                _fail(f"node {i}: permutation replay produced a different tangle")

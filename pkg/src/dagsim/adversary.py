"""Bait-and-switch adversary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

from .consensus import VoteBook
from .engine import EventKind, ms_to_us
from .topology import ConfigError

if TYPE_CHECKING:
    from .simulation import Simulation

SCENARIOS = ("none", "bait-and-switch")


@dataclass
class AdversaryConfig:
    q_a: float = 0.05
    n_a: int = 2
    d_q: float = 100.0
    step_interval_ms: Optional[float] = None
    scenario: str = "none"
    attack_start_ms: float = 10_000.0
    switch_margin: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.q_a < 1.0:
            raise ConfigError(f"adv_weight must be in [0, 1), got {self.q_a}")
        if self.n_a < 0:
            raise ConfigError(f"adv_count must be >= 0, got {self.n_a}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.scenario != "none" and self.q_a > 0 and self.n_a == 0:
            raise ConfigError("adv_count must be >= 1 when adv_weight > 0")
        if self.step_interval_ms is not None and self.step_interval_ms <= 0:
            raise ConfigError(f"step_interval_ms must be > 0, got {self.step_interval_ms}")
        if self.attack_start_ms < 0:
            raise ConfigError(f"attack_start_s must be >= 0, got {self.attack_start_ms}")
        if not 0.0 <= self.switch_margin <= 1.0:
            raise ConfigError(f"switch_margin must be in [0, 1], got {self.switch_margin}")

    @property
    def active(self) -> bool:
        return self.scenario == "bait-and-switch" and self.q_a > 0 and self.n_a > 0

    @property
    def step_ms(self) -> float:
        return self.d_q if self.step_interval_ms is None else self.step_interval_ms


def place_adversary(weights: Sequence[float], cfg: AdversaryConfig) -> tuple[list[float], list[int]]:
    """Append ``n_a`` adversary nodes sharing ``q_a`` and rescale honest weights.

    Returns the full weight vector and the adversary node ids. Inactive
    configurations leave the honest vector untouched.
    """
    cfg.validate()
    if not cfg.active:
        return list(weights), []
    honest = [w * (1.0 - cfg.q_a) for w in weights]
    share = cfg.q_a / cfg.n_a
    first = len(honest)
    return honest + [share] * cfg.n_a, list(range(first, first + cfg.n_a))


class BaitAndSwitch:
    """Keeps minting fresh conflicts and moving the whole adversary weight to
    the newest one whenever its current conflict stops being the strict leader
    or gathers honest votes beyond the switch margin.

    Fresh conflicts hang off a fixed set of conflict-free blocks taken at the
    start of the attack, so they never inherit an earlier member. At most one
    switch happens per step interval.
    """

    def __init__(self, sim: "Simulation", cfg: AdversaryConfig, nodes: Sequence[int]):
        self.sim = sim
        self.cfg = cfg
        self.nodes = list(nodes)
        self.step_us = ms_to_us(cfg.step_ms)
        self.start_us = ms_to_us(cfg.attack_start_ms)
        self.started = False
        self.current: Optional[int] = None
        self.minted: list[int] = []
        self.anchor: tuple[int, ...] = ()
        self.last_switch: Optional[int] = None
        self._step_pending = False
        self._trigger_pending = False
        self._switching = False
        units = sim.units
        self.margin_units = int(cfg.switch_margin * sum(units))
        self._adv = set(self.nodes)

    def schedule_start(self) -> None:
        self._step_pending = True
        self.sim.engine.schedule(self.start_us, EventKind.ADVERSARY_STEP, payload=True)

    def honest_weight(self, votes: VoteBook, cid: int) -> int:
        adv = sum(votes.units[i] for i in self._adv if votes.votes.get(i, (None,))[0] == cid)
        return votes.weight(cid) - adv

    def adversary_weight(self, votes: VoteBook) -> int:
        return sum(votes.units[i] for i in self._adv if i in votes.votes)

    def should_switch(self, votes: VoteBook) -> bool:
        """Abandon the current conflict once it leads or honest nodes took the bait."""
        cur = self.current
        if cur is None:
            return True
        if self.honest_weight(votes, cur) > self.margin_units:
            return True
        w = votes.weight(cur)
        return all(x < w for c, x in votes.weights.items() if c != cur)

    def step(self, now: int, periodic: bool = True) -> Optional[int]:
        if periodic:
            self._step_pending = False
        else:
            self._trigger_pending = False
        if self.sim.engine.stopped or self.sim.consensus.resolution is not None:
            return None
        minted = None
        if not self.started:
            self.started = True
            anchor_node = self.sim.nodes[self.nodes[0]]
            tips = sorted(anchor_node.tangle.childless[None])
            self.anchor = tuple(tips[-self.sim.issuance.n_tips:]) or (0,)
            minted = self.switch(now)
        elif self.should_switch(self.sim.global_votes) and (
                now - self.last_switch >= self.step_us):
            minted = self.switch(now)
        if periodic:
            self._step_pending = True
            self.sim.engine.schedule(now + self.step_us, EventKind.ADVERSARY_STEP, payload=True)
        return minted

    def on_vote_change(self, now: int) -> None:
        """React to a change of the global conflict weights without waiting
        for the next periodic step (still at most one switch per interval)."""
        if not self.started or self._trigger_pending or self._switching:
            return
        if not self.should_switch(self.sim.global_votes):
            return
        self._trigger_pending = True
        at = max(now, self.last_switch + self.step_us)
        self.sim.engine.schedule(at, EventKind.ADVERSARY_STEP, payload=False)

    def switch(self, now: int) -> int:
        self._switching = True
        self.last_switch = now
        minter = self.nodes[len(self.minted) % len(self.nodes)]
        block = self.sim.issue_block(minter, parents=self.anchor, conflict=True)
        cid = block.conflict
        for adv in self.nodes:
            if adv == minter:
                continue
            self.sim.accept(self.sim.nodes[adv], block, sender=None)
            self.sim.issue_block(adv, parents=(block.id,))
        self.minted.append(cid)
        self.current = cid
        self._switching = False
        return cid

"""Block DAG: block minting, per-node storage, solidification, booking and tips."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .topology import ConfigError

GENESIS = 0
NO_ISSUER = -1
# support marker for blocks whose past cone holds two members of the conflict set
INVALID = -1


@dataclass(frozen=True, slots=True)
class Block:
    id: int
    issuer: int
    seq: int
    parents: tuple[int, ...]
    issued_at: int
    conflict: Optional[int] = None


@dataclass
class IssuanceConfig:
    bps: float = 100.0
    imif: str = "poisson"
    n_tips: int = 8

    def validate(self) -> None:
        if self.bps <= 0:
            raise ConfigError(f"bps must be > 0, got {self.bps}")
        if self.imif not in ("poisson", "deterministic"):
            raise ConfigError(f"imif must be 'poisson' or 'deterministic', got {self.imif!r}")
        if self.n_tips < 1:
            raise ConfigError(f"tips must be >= 1, got {self.n_tips}")


def merge_support(own: Optional[int], parent_supports) -> Optional[int]:
    """Conflict supported by a block given its payload and its parents' support."""
    found = own
    for sp in parent_supports:
        if sp is None:
            continue
        if sp == INVALID:
            return INVALID
        if found is None:
            found = sp
        elif found != sp:
            return INVALID
    return found


class Ledger:
    """Every block ever created, indexed by creation order.

    Quantities that depend only on a block's past cone (the cone bitset and
    the supported conflict) are computed once here and shared by all nodes.
    """

    def __init__(self):
        genesis = Block(GENESIS, NO_ISSUER, 0, (), 0, None)
        self.blocks: list[Block] = [genesis]
        self.cone: list[int] = [1]
        self.support: list[Optional[int]] = [None]
        self._seq: dict[int, int] = defaultdict(int)
        # conflict id -> block id of the block that introduced it
        self.conflict_blocks: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, bid: int) -> Block:
        return self.blocks[bid]

    def next_conflict_id(self) -> int:
        return len(self.conflict_blocks) + 1

    def mint(self, issuer: int, parents, issued_at: int, conflict: bool = False) -> Block:
        parents = tuple(sorted(set(parents)))
        if not parents:
            raise ValueError("only genesis may have no parents")
        bid = len(self.blocks)
        if any(p >= bid or p < 0 for p in parents):
            raise ValueError(f"block {bid} references unknown parents {parents}")
        self._seq[issuer] += 1
        cid = self.next_conflict_id() if conflict else None
        block = Block(bid, issuer, self._seq[issuer], parents, issued_at, cid)
        cone = 1 << bid
        for p in parents:
            cone |= self.cone[p]
        self.blocks.append(block)
        self.cone.append(cone)
        self.support.append(merge_support(cid, (self.support[p] for p in parents)))
        if cid is not None:
            self.conflict_blocks[cid] = bid
        return block

    def issued(self) -> list[Block]:
        return self.blocks[1:]


class AttachStatus(Enum):
    BOOKED = "booked"
    PENDING = "pending"
    DUPLICATE = "duplicate"
    REJECTED = "rejected"


@dataclass
class AttachResult:
    status: AttachStatus
    booked: list[int]
    missing: list[int]


class LocalTangle:
    """One node's replica of the DAG."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.store: dict[int, Block] = {GENESIS: ledger[GENESIS]}
        self.solid: set[int] = {GENESIS}
        self.booked: list[int] = [GENESIS]
        self.pending: dict[int, set[int]] = {}
        self._waiting: dict[int, list[int]] = defaultdict(list)
        # childless booked valid blocks, keyed by the conflict they support
        self.childless: dict[Optional[int], set[int]] = {None: {GENESIS}}
        self.invalid: set[int] = set()
        # booked blocks per supported conflict, for the empty-pool fallback
        self.by_support: dict[Optional[int], list[int]] = {None: [GENESIS]}
        self.rejected = 0

    def has(self, bid: int) -> bool:
        return bid in self.store

    def is_booked(self, bid: int) -> bool:
        return bid in self.solid

    def attach(self, block: Block) -> AttachResult:
        if block.id in self.store:
            return AttachResult(AttachStatus.DUPLICATE, [], [])
        if (not block.parents or block.id in block.parents
                or len(set(block.parents)) != len(block.parents)):
            self.rejected += 1
            return AttachResult(AttachStatus.REJECTED, [], [])
        self.store[block.id] = block
        unsolid = [p for p in block.parents if p not in self.solid]
        if unsolid:
            self.pending[block.id] = set(unsolid)
            for p in unsolid:
                self._waiting[p].append(block.id)
            missing = [p for p in unsolid if p not in self.store]
            return AttachResult(AttachStatus.PENDING, [], missing)
        return AttachResult(AttachStatus.BOOKED, self._cascade(block.id), [])

    def _cascade(self, root: int) -> list[int]:
        order = [root]
        i = 0
        while i < len(order):
            bid = order[i]
            i += 1
            self.book(bid)
            for child in self._waiting.pop(bid, ()):
                waits = self.pending[child]
                waits.discard(bid)
                if not waits:
                    del self.pending[child]
                    order.append(child)
        return order

    def book(self, bid: int) -> None:
        """Admit a solid block: parents leave the tip pool, the block may enter it."""
        block = self.store[bid]
        support = self.ledger.support
        self.solid.add(bid)
        self.booked.append(bid)
        for p in block.parents:
            sp = support[p]
            if sp != INVALID:
                self.childless[sp].discard(p)
        sb = support[bid]
        if sb == INVALID:
            self.invalid.add(bid)
            return
        self.childless.setdefault(sb, set()).add(bid)
        self.by_support.setdefault(sb, []).append(bid)

    def missing_parents(self) -> set[int]:
        """Ids referenced by pending blocks that are not stored at all."""
        out = set()
        for waits in self.pending.values():
            out.update(p for p in waits if p not in self.store)
        return out

    def valid_tips(self, opinion: Optional[int]) -> set[int]:
        tips = set(self.childless[None])
        if opinion is not None:
            tips |= self.childless.get(opinion, set())
        return tips

    def tip_pool_size(self, opinion: Optional[int]) -> int:
        n = len(self.childless[None])
        if opinion is not None:
            n += len(self.childless.get(opinion, ()))
        return n

    def valid_blocks(self, opinion: Optional[int]) -> list[int]:
        out = list(self.by_support[None])
        if opinion is not None:
            out += self.by_support.get(opinion, [])
        return out


def select_tips(tangle: LocalTangle, opinion: Optional[int], n_tips: int,
                rng: random.Random,
                heaviness: Optional[Callable[[int], float]] = None) -> tuple[int, ...]:
    """Uniform sample without replacement from the opinion-consistent tips.

    With an empty pool the heaviest valid booked block is returned instead
    (ties go to the most recent one).
    """
    pool = sorted(tangle.valid_tips(opinion))
    if pool:
        if len(pool) <= n_tips:
            return tuple(pool)
        return tuple(sorted(rng.sample(pool, n_tips)))
    candidates = tangle.valid_blocks(opinion)
    if heaviness is None:
        return (max(candidates),)
    return (max(candidates, key=lambda b: (heaviness(b), b)),)


def write_dag(tangle: LocalTangle, path) -> None:
    """One line per stored block: ``id issuer issued_ms parents... conflict``.

    Genesis is omitted; a missing conflict is written as ``-``.
    """
    with open(path, "w") as fh:
        for bid in sorted(tangle.store):
            if bid == GENESIS:
                continue
            b = tangle.store[bid]
            conflict = "-" if b.conflict is None else str(b.conflict)
            parents = " ".join(str(p) for p in b.parents)
            fh.write(f"{b.id} {b.issuer} {b.issued_at // 1000} {parents} {conflict}\n")

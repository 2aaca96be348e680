"""Approval Weight, confirmation, and the single conflict set.

Weights are handled as integer units (normalised weight times 2**50) so that
sums are exact and independent of the order in which supporters arrive.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .tangle import INVALID, Block, Ledger
from .topology import ConfigError

WEIGHT_SCALE = 2**50


@dataclass
class ConsensusConfig:
    theta: float = 0.66
    count_self_support: bool = True

    def validate(self) -> None:
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"theta must be in (0, 1], got {self.theta}")


def weight_units(weights: Sequence[float]) -> list[int]:
    return [int(round(w * WEIGHT_SCALE)) for w in weights]


def threshold_units(theta: float, total: int) -> int:
    """Largest unit count that does not exceed ``theta * total``.

    ``aw > threshold_units`` is then equivalent to ``aw > theta * total`` for
    integer ``aw``.
    """
    return math.floor(Fraction(theta) * total)


def bit_indices(x: int) -> np.ndarray:
    """Positions of the set bits of a non-negative int, ascending."""
    if not x:
        return np.empty(0, dtype=np.int64)
    base = ((x & -x).bit_length() - 1) & ~7
    x >>= base
    raw = np.frombuffer(x.to_bytes((x.bit_length() + 7) // 8, "little"), dtype=np.uint8)
    return np.flatnonzero(np.unpackbits(raw, bitorder="little")) + base


class ApprovalTracker:
    """Supporter sets and confirmation for one observer.

    For every issuer the tracker keeps the union of the past cones of that
    issuer's blocks seen so far (a bitset over block ids). The supporters of
    block ``b`` are exactly the issuers whose union contains ``b``. Booking a
    block only touches the bits it newly adds to its issuer's union.

    Pending AW is accumulated only for unconfirmed blocks; once a block
    crosses the threshold its exact AW is still available through
    :meth:`approval_units`.
    """

    def __init__(self, ledger: Ledger, units: Sequence[int], theta: float,
                 count_self_support: bool = True):
        self.ledger = ledger
        self.units = list(units)
        self.total = sum(self.units)
        self.threshold = threshold_units(theta, self.total)
        self.count_self_support = count_self_support
        self.covered: dict[int, int] = {}
        self.confirmed_mask = 0
        self._aw = np.zeros(256, dtype=np.int64)
        self.confirmed_at = np.full(256, -1, dtype=np.int64)

    def _grow(self, size: int) -> None:
        cap = len(self._aw)
        if size <= cap:
            return
        while cap < size:
            cap *= 2
        aw = np.zeros(cap, dtype=np.int64)
        aw[:len(self._aw)] = self._aw
        conf = np.full(cap, -1, dtype=np.int64)
        conf[:len(self.confirmed_at)] = self.confirmed_at
        self._aw, self.confirmed_at = aw, conf

    def update(self, block: Block, now: int) -> list[int]:
        """Add ``block.issuer`` to the supporters of the block's past cone.

        Returns the ids whose AW first exceeded the threshold.
        """
        issuer = block.issuer
        if issuer < 0:
            return []
        cone = self.ledger.cone[block.id]
        if not self.count_self_support:
            cone &= ~(1 << block.id)
        prev = self.covered.get(issuer, 0)
        new = cone & ~prev
        if not new:
            return []
        self.covered[issuer] = prev | cone
        new &= ~self.confirmed_mask
        if not new:
            return []
        idx = bit_indices(new)
        self._grow(block.id + 1)
        aw = self._aw
        aw[idx] += self.units[issuer]
        hit = idx[aw[idx] > self.threshold]
        if not len(hit):
            return []
        self.confirmed_at[hit] = now
        out = hit.tolist()
        mask = 0
        for b in out:
            mask |= 1 << b
        self.confirmed_mask |= mask
        return out

    def supporters(self, bid: int) -> set[int]:
        return {i for i, c in self.covered.items() if (c >> bid) & 1}

    def approval_units(self, bid: int) -> int:
        return sum(self.units[i] for i in self.supporters(bid))

    def approval_weight(self, bid: int) -> float:
        return self.approval_units(bid) / self.total

    def is_confirmed(self, bid: int) -> bool:
        return bool((self.confirmed_mask >> bid) & 1)

    def confirmation_time(self, bid: int) -> Optional[int]:
        if not self.is_confirmed(bid):
            return None
        return int(self.confirmed_at[bid])


class VoteBook:
    """Members of the conflict set and each issuer's latest vote.

    A vote is the conflict supported by an issuer's block; recency is the
    issuer sequence number, so replaying blocks in any order converges to the
    same state.
    """

    def __init__(self, units: Sequence[int], owner: Optional[int] = None,
                 count_own_vote: bool = True):
        self.units = units
        self.owner = owner
        self.count_own_vote = count_own_vote
        self.members: list[int] = []
        self.votes: dict[int, tuple[int, int]] = {}
        self.weights: dict[int, int] = {}
        self._opinion: Optional[int] = None
        self._dirty = False

    def add_member(self, cid: int) -> None:
        i = bisect.bisect_left(self.members, cid)
        if i < len(self.members) and self.members[i] == cid:
            return
        self.members.insert(i, cid)
        self._dirty = True

    def record(self, block: Block, support: Optional[int]) -> bool:
        """Register the vote cast by ``block``; True if any weight moved."""
        if block.conflict is not None:
            self.add_member(block.conflict)
        if support is None or support == INVALID or block.issuer < 0:
            return False
        issuer = block.issuer
        prev = self.votes.get(issuer)
        if prev is not None and prev[1] >= block.seq:
            return False
        self.votes[issuer] = (support, block.seq)
        if prev is not None and prev[0] == support:
            return False
        w = self.units[issuer]
        if prev is not None:
            left = self.weights[prev[0]] - w
            if left:
                self.weights[prev[0]] = left
            else:
                del self.weights[prev[0]]
        self.weights[support] = self.weights.get(support, 0) + w
        self._dirty = True
        return True

    def weight(self, cid: int) -> int:
        return self.weights.get(cid, 0)

    def opinion(self) -> Optional[int]:
        """Heaviest member; ties go to the smaller conflict id."""
        if not self._dirty:
            return self._opinion
        self._dirty = False
        weights = self.weights
        own = None if self.count_own_vote else self.votes.get(self.owner)
        if own is not None:
            weights = dict(weights)
            weights[own[0]] -= self.units[self.owner]
        best = None
        for cid, w in weights.items():
            if w > 0 and (best is None or (w, -cid) > best):
                best = (w, -cid)
        if best is not None:
            self._opinion = -best[1]
        elif self.members:
            self._opinion = self.members[0]
        else:
            self._opinion = None
        return self._opinion

    def leader_above(self, threshold: int) -> Optional[int]:
        for cid, w in self.weights.items():
            if w > threshold:
                return cid
        return None


@dataclass
class Resolution:
    winner: int
    at: int
    members: int
    consensus_time: int


class ConsensusMonitor:
    """Global-observer detection of the first member whose weight exceeds theta."""

    def __init__(self, ledger: Ledger, votes: VoteBook, threshold: int):
        self.ledger = ledger
        self.votes = votes
        self.threshold = threshold
        self.resolution: Optional[Resolution] = None

    @property
    def started_at(self) -> Optional[int]:
        if not self.ledger.conflict_blocks:
            return None
        first = self.ledger.conflict_blocks[1]
        return self.ledger[first].issued_at

    def check(self, now: int) -> Optional[Resolution]:
        if self.resolution is not None or not self.votes.members:
            return None
        winner = self.votes.leader_above(self.threshold)
        if winner is None:
            return None
        self.resolution = Resolution(winner, now, len(self.votes.members),
                                     now - self.started_at)
        return self.resolution

"""A peer: local tangle, approval tracking, votes and neighbour links."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .consensus import ApprovalTracker, VoteBook
from .tangle import LocalTangle


@dataclass(eq=False)
class NodeAgent:
    id: int
    weight: float
    neighbors: list[int]
    tangle: LocalTangle
    approval: ApprovalTracker
    votes: VoteBook
    adversary: bool = False
    gossiped: set[int] = field(default_factory=set)
    requested: set[int] = field(default_factory=set)
    retry_armed: bool = False
    # sender of each block still waiting for solidification, for gossip exclusion
    senders: dict[int, Optional[int]] = field(default_factory=dict)

    def opinion(self) -> Optional[int]:
        return self.votes.opinion()

    def tip_pool_size(self) -> int:
        return self.tangle.tip_pool_size(self.opinion())

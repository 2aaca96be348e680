"""Message transport: uniform per-message latency, Bernoulli loss, gossip and
the solidification request/response protocol."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable, Optional

from .engine import Engine, EventKind, ms_to_us
from .topology import ConfigError, PeerGraph

if TYPE_CHECKING:
    from .node import NodeAgent


@dataclass
class NetworkConfig:
    d_min: float = 50.0
    d_max: float = 150.0
    p_loss: float = 0.0
    d_q: float = 100.0
    retry_interval_ms: float = 500.0

    def validate(self) -> None:
        if not 0 <= self.d_min <= self.d_max:
            raise ConfigError(f"need 0 <= dmin_ms <= dmax_ms, got {self.d_min}, {self.d_max}")
        if not 0.0 <= self.p_loss <= 1.0:
            raise ConfigError(f"ploss must be in [0, 1], got {self.p_loss}")
        if self.d_q < 0:
            raise ConfigError(f"adv_delay_ms must be >= 0, got {self.d_q}")
        if self.retry_interval_ms <= 0:
            raise ConfigError(f"retry_interval_ms must be > 0, got {self.retry_interval_ms}")


class MsgKind(Enum):
    BLOCK = EventKind.DELIVER_BLOCK
    REQUEST = EventKind.DELIVER_REQUEST
    RESPONSE = EventKind.DELIVER_RESPONSE


@dataclass(frozen=True, slots=True)
class Message:
    kind: MsgKind
    sender: int
    receiver: int
    body: object  # Block for BLOCK/RESPONSE, block id for REQUEST


class TransportError(RuntimeError):
    pass


@dataclass
class TransportStats:
    sent: int = 0
    lost: int = 0
    scheduled: int = 0
    suppressed: int = 0
    requests: int = 0


class Transport:
    """Schedules message deliveries on the engine.

    Delay and loss are drawn for every message. A block message whose
    delivery is provably redundant (the receiver already stores the block, or
    an earlier-or-equal delivery of it is already queued) is not put on the
    queue; its delivery would be discarded as a duplicate anyway, so this only
    saves events. ``dedup=False`` disables the shortcut.
    """

    def __init__(self, engine: Engine, graph: PeerGraph, cfg: NetworkConfig,
                 adversaries: Iterable[int] = (), dedup: bool = True):
        cfg.validate()
        self.engine = engine
        self.graph = graph
        self.cfg = cfg
        self.adversaries = frozenset(adversaries)
        self.dedup = dedup
        self.delay_rng = engine.rng_stream("link-delay")
        self.loss_rng = engine.rng_stream("packet-loss")
        self.request_rng = engine.rng_stream("tip-selection")
        self.stats = TransportStats()
        self._d_min = cfg.d_min
        self._d_max = cfg.d_max
        self._d_q = ms_to_us(cfg.d_q)
        self._p_loss = cfg.p_loss
        self._delay_random = self.delay_rng.random
        self._loss_random = self.loss_rng.random
        self._inflight: list[dict[int, int]] = [dict() for _ in range(graph.n)]
        self._knows: Optional[Callable[[int, int], bool]] = None

    def bind(self, knows: Callable[[int, int], bool]) -> None:
        """Give the transport read access to ``knows(node, block_id)``."""
        self._knows = knows

    def delivered(self, node: int, bid: int) -> None:
        self._inflight[node].pop(bid, None)

    def sample_delay(self, sender: int) -> int:
        if sender in self.adversaries:
            return self._d_q
        # same draw as random.uniform(d_min, d_max), rounded to microseconds
        ms = self._d_min + (self._d_max - self._d_min) * self._delay_random()
        return int(ms * 1000.0 + 0.5)

    def send(self, msg: Message) -> Optional[int]:
        """Returns the delivery event id, or None if the message was lost or
        suppressed as redundant."""
        receiver = msg.receiver
        if not self.graph.has_edge(msg.sender, receiver):
            raise TransportError(f"{msg.sender} and {receiver} are not neighbours")
        stats = self.stats
        stats.sent += 1
        if self._p_loss > 0 and self._loss_random() < self._p_loss:
            stats.lost += 1
            return None
        at = self.engine.now + self.sample_delay(msg.sender)
        if self.dedup and msg.kind is not MsgKind.REQUEST and self._knows is not None:
            bid = msg.body.id
            queued = self._inflight[receiver]
            if self._knows(receiver, bid) or queued.get(bid, at + 1) <= at:
                stats.suppressed += 1
                return None
            queued[bid] = at
        stats.scheduled += 1
        return self.engine.schedule(at, msg.kind.value, receiver, msg)

    def gossip_block(self, node: "NodeAgent", block, exclude: Optional[int] = None) -> list[int]:
        """Forward ``block`` to every neighbour except ``exclude``, at most once per node."""
        if block.id in node.gossiped:
            return []
        node.gossiped.add(block.id)
        targets = [n for n in node.neighbors if n != exclude]
        for n in targets:
            self.send(Message(MsgKind.BLOCK, node.id, n, block))
        return targets

    def request_missing(self, node: "NodeAgent", missing: Iterable[int]) -> list[int]:
        """Ask one random neighbour per missing id; arms the node's retry timer."""
        asked = []
        for bid in sorted(missing):
            if node.tangle.has(bid):
                continue
            peer = node.neighbors[self.request_rng.randrange(len(node.neighbors))]
            self.stats.requests += 1
            self.send(Message(MsgKind.REQUEST, node.id, peer, bid))
            node.requested.add(bid)
            asked.append(peer)
        if node.requested and not node.retry_armed:
            node.retry_armed = True
            self.engine.schedule_in(ms_to_us(self.cfg.retry_interval_ms),
                                    EventKind.RETRY_SOLIDIFICATION, node.id)
        return asked

    def retry(self, node: "NodeAgent") -> list[int]:
        node.retry_armed = False
        node.requested = {b for b in node.requested if not node.tangle.has(b)}
        if not node.requested:
            return []
        return self.request_missing(node, set(node.requested))

    def respond_request(self, node: "NodeAgent", request: Message) -> Optional[int]:
        bid = request.body
        if not node.tangle.has(bid):
            return None
        block = node.tangle.store[bid]
        return self.send(Message(MsgKind.RESPONSE, node.id, request.sender, block))

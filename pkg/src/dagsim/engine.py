"""Virtual-clock discrete-event scheduler.

Time is kept internally as integer microseconds; configs and outputs use
milliseconds. Events are ordered by ``(at, id)`` where ``id`` is the
insertion sequence number, so ties resolve in scheduling order.
"""

from __future__ import annotations

import hashlib
import heapq
import random
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, NamedTuple

US_PER_MS = 1000

GLOBAL = -1


class EventKind(IntEnum):
    DELIVER_BLOCK = 0
    DELIVER_REQUEST = 1
    DELIVER_RESPONSE = 2
    ISSUE_BLOCK = 3
    ADVERSARY_STEP = 4
    METRICS_SAMPLE = 5
    RETRY_SOLIDIFICATION = 6
    END_OF_RUN = 7


class SimEvent(NamedTuple):
    at: int
    id: int
    kind: EventKind
    target: int
    payload: Any = None


class SchedulingError(RuntimeError):
    """An event was scheduled before the current virtual time."""


@dataclass
class EngineConfig:
    seed: int = 0
    duration_ms: float = 60_000.0
    pacing_factor: float = 0.0
    sample_interval_ms: float = 100.0

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be > 0")
        if self.sample_interval_ms <= 0:
            raise ValueError("sample_interval_ms must be > 0")
        if self.pacing_factor < 0:
            raise ValueError("pacing_factor must be >= 0")


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from an arbitrary tuple of labels."""
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


Handler = Callable[[SimEvent], None]


class Engine:
    def __init__(self, seed: int = 0, pacing_factor: float = 0.0,
                 pacing_interval_ms: float = 100.0, record_log: bool = False):
        self.seed = seed
        self.pacing_factor = pacing_factor
        self._pacing_interval = max(1, ms_to_us(pacing_interval_ms))
        self.now = 0
        self._queue: list[SimEvent] = []
        self._next_id = 0
        self._handlers: dict[EventKind, Handler] = {}
        self._streams: dict[str, random.Random] = {}
        self._stopped = False
        self.dispatched = 0
        self.log: list[tuple[int, int, int, int]] | None = [] if record_log else None

    @property
    def now_ms(self) -> float:
        return self.now / US_PER_MS

    @property
    def stopped(self) -> bool:
        return self._stopped

    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def rng_stream(self, label: str) -> random.Random:
        """Independent generator keyed by ``(seed, label)``.

        Repeated calls with the same label return the same generator object,
        so draws continue the stream rather than restarting it.
        """
        stream = self._streams.get(label)
        if stream is None:
            stream = random.Random(derive_seed(self.seed, label))
            self._streams[label] = stream
        return stream

    def schedule(self, at: int, kind: EventKind, target: int = GLOBAL,
                 payload: Any = None) -> int:
        """Enqueue an event at absolute virtual time ``at`` (microseconds)."""
        if at < self.now:
            raise SchedulingError(
                f"event {kind.name} for {target} scheduled at {at}us < now {self.now}us")
        eid = self._next_id
        self._next_id += 1
        heapq.heappush(self._queue, SimEvent(at, eid, kind, target, payload))
        return eid

    def schedule_in(self, delay: int, kind: EventKind, target: int = GLOBAL,
                    payload: Any = None) -> int:
        return self.schedule(self.now + delay, kind, target, payload)

    def stop(self) -> None:
        """Halt dispatch; pending events are discarded."""
        self._stopped = True
        self._queue.clear()

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with ``at <= t_end``; returns the count."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before now ({self.now})")
        queue = self._queue
        handlers = self._handlers
        log = self.log
        pacing = self.pacing_factor > 0
        t_start = self.now
        wall_start = time.perf_counter()
        next_pace = t_start + self._pacing_interval
        count = 0
        pop = heapq.heappop
        while queue and not self._stopped and queue[0].at <= t_end:
            ev = pop(queue)
            if pacing and ev.at >= next_pace:
                self._pace(wall_start, ev.at - t_start)
                next_pace = ev.at - (ev.at - t_start) % self._pacing_interval + self._pacing_interval
            self.now = ev.at
            if log is not None:
                log.append((ev.id, ev.at, int(ev.kind), ev.target))
            handlers[ev.kind](ev)
            count += 1
        if not self._stopped:
            self.now = t_end
        if pacing:
            self._pace(wall_start, self.now - t_start)
        self.dispatched += count
        return count

    def _pace(self, wall_start: float, virtual_elapsed_us: int) -> None:
        target = wall_start + self.pacing_factor * virtual_elapsed_us / 1e6
        delay = target - time.perf_counter()
        if delay > 0:
            time.sleep(delay)

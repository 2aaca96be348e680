"""Peer graph (Watts-Strogatz) and node weights (Zipf)."""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending key."""


@dataclass
class TopologyConfig:
    nodes: int = 1000
    k: int = 8
    gamma: float = 1.0
    s: float = 0.9

    def validate(self) -> None:
        if self.k < 2 or self.k % 2:
            raise ConfigError(f"k_neighbors must be even and >= 2, got {self.k}")
        if self.nodes <= self.k:
            raise ConfigError(f"nodes must exceed k_neighbors ({self.nodes} <= {self.k})")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"rewire must be in [0, 1], got {self.gamma}")
        if self.s < 0:
            raise ConfigError(f"zipf must be >= 0, got {self.s}")


class PeerGraph:
    """Undirected simple graph over node ids ``0..n-1``."""

    def __init__(self, n: int, edges=()):
        self.n = n
        self._adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            self.add_edge(i, j)

    def add_edge(self, i: int, j: int) -> None:
        if i == j:
            raise ValueError(f"self-loop at {i}")
        self._adj[i].add(j)
        self._adj[j].add(i)

    def remove_edge(self, i: int, j: int) -> None:
        self._adj[i].discard(j)
        self._adj[j].discard(i)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adj[i]

    def neighbors(self, i: int) -> list[int]:
        return sorted(self._adj[i])

    def adjacency(self) -> list[list[int]]:
        return [sorted(a) for a in self._adj]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in sorted(self._adj[i]) if i < j]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self._adj) // 2

    def bfs_distances(self, source: int) -> list[int]:
        dist = [-1] * self.n
        dist[source] = 0
        q = deque([source])
        while q:
            u = q.popleft()
            for v in self._adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist

    def is_connected(self) -> bool:
        return self.n == 0 or min(self.bfs_distances(0)) >= 0

    def diameter(self) -> int:
        return max(max(self.bfs_distances(i)) for i in range(self.n))

    def write_edge_list(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for i, j in self.edges():
                fh.write(f"{i} {j}\n")


def _watts_strogatz_once(n: int, k: int, gamma: float, rng: random.Random) -> PeerGraph:
    g = PeerGraph(n)
    half = k // 2
    for i in range(n):
        for off in range(1, half + 1):
            g.add_edge(i, (i + off) % n)
    if gamma == 0:
        return g
    for i in range(n):
        for off in range(1, half + 1):
            j = (i + off) % n
            if rng.random() >= gamma:
                continue
            if len(g._adj[i]) >= n - 1:
                continue
            u = rng.randrange(n)
            while u == i or g.has_edge(i, u):
                u = rng.randrange(n)
            g.remove_edge(i, j)
            g.add_edge(i, u)
    return g


def generate_watts_strogatz(cfg: TopologyConfig, rng: random.Random,
                            max_attempts: int = 100) -> PeerGraph:
    """Connected Watts-Strogatz graph with exactly ``nodes * k / 2`` edges.

    Lattice edges ``(i, i+off)`` are visited in ascending ``(i, off)`` order and
    each is rewired with probability ``gamma`` to a uniformly chosen endpoint
    that is neither ``i`` nor an existing neighbour. Disconnected draws are
    discarded and regenerated from the continuing stream.
    """
    cfg.validate()
    for _ in range(max_attempts):
        g = _watts_strogatz_once(cfg.nodes, cfg.k, cfg.gamma, rng)
        if g.is_connected():
            return g
    raise ConfigError(
        f"no connected Watts-Strogatz graph after {max_attempts} attempts "
        f"(nodes={cfg.nodes}, k={cfg.k}, rewire={cfg.gamma})")


def zipf_weights(n: int, s: float) -> list[float]:
    """Rank-``i`` weight proportional to ``i**-s``, normalised to sum 1."""
    if n < 1:
        raise ConfigError(f"nodes must be >= 1, got {n}")
    if s < 0:
        raise ConfigError(f"zipf must be >= 0, got {s}")
    raw = [(i + 1) ** -s for i in range(n)]
    total = math.fsum(raw)
    return [r / total for r in raw]

"""Flat run configuration with file loading and override semantics."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from .adversary import AdversaryConfig
from .consensus import ConsensusConfig
from .engine import EngineConfig
from .network import NetworkConfig
from .tangle import IssuanceConfig
from .topology import ConfigError, TopologyConfig

# keys of run_meta.csv that are not configuration
META_ONLY = ("version",)


@dataclass
class RunConfig:
    seed: int = 0
    duration_s: float = 60.0
    nodes: int = 1000
    zipf: float = 0.9
    rewire: float = 1.0
    k_neighbors: int = 8
    dmin_ms: float = 50.0
    dmax_ms: float = 150.0
    ploss: float = 0.0
    tips: int = 8
    bps: float = 100.0
    imif: str = "poisson"
    theta: float = 0.66
    scenario: str = "none"
    adv_weight: float = 0.05
    adv_count: int = 2
    adv_delay_ms: float = 100.0
    pacing: float = 0.0
    sample_interval_ms: float = 100.0
    retry_interval_ms: float = 500.0
    attack_start_s: float = 10.0
    step_interval_ms: Optional[float] = None
    switch_margin: float = 0.0
    self_support: bool = True
    own_vote_in_opinion: bool = True
    stop_on_consensus: bool = False
    full_local_confirmations: bool = False
    debug: bool = False

    @property
    def topology(self) -> TopologyConfig:
        return TopologyConfig(self.nodes, self.k_neighbors, self.rewire, self.zipf)

    @property
    def network(self) -> NetworkConfig:
        return NetworkConfig(self.dmin_ms, self.dmax_ms, self.ploss, self.adv_delay_ms,
                             self.retry_interval_ms)

    @property
    def issuance(self) -> IssuanceConfig:
        return IssuanceConfig(self.bps, self.imif, self.tips)

    @property
    def consensus(self) -> ConsensusConfig:
        return ConsensusConfig(self.theta, self.self_support)

    @property
    def adversary(self) -> AdversaryConfig:
        return AdversaryConfig(self.adv_weight, self.adv_count, self.adv_delay_ms,
                               self.step_interval_ms, self.scenario,
                               self.attack_start_s * 1000.0, self.switch_margin)

    @property
    def engine(self) -> EngineConfig:
        return EngineConfig(self.seed, self.duration_s * 1000.0, self.pacing,
                            self.sample_interval_ms)

    @property
    def duration_ms(self) -> float:
        return self.duration_s * 1000.0

    @property
    def drain_ms(self) -> float:
        return 10 * self.dmax_ms + 2 * self.retry_interval_ms

    def validate(self, topology: bool = True) -> "RunConfig":
        """Raise ConfigError on the first invalid field.

        ``topology=False`` skips the graph constraints, for callers that
        supply their own peer graph (e.g. two-node test networks).
        """
        try:
            self.engine.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if topology:
            self.topology.validate()
        elif self.nodes < 1 or self.zipf < 0:
            raise ConfigError(f"need nodes >= 1 and zipf >= 0, got {self.nodes}, {self.zipf}")
        self.network.validate()
        self.issuance.validate()
        self.consensus.validate()
        self.adversary.validate()
        return self

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict[str, str]:
        """Resolved configuration as ordered ``key -> text`` pairs."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = "" if v is None else (repr(v) if isinstance(v, float) else str(v))
        return out


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, text: str) -> Any:
    """Convert ``text`` to the type of config field ``key``."""
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    ftype = FIELD_TYPES[key]
    text = text.strip()
    try:
        if ftype == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
        if ftype == "Optional[float]":
            return None if text in ("", "none", "None") else float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from None


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse ``key = value`` lines (``#`` comments) or a ``run_meta.csv`` echo."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values: dict[str, Any] = {}
    if path.suffix == ".csv":
        rows = list(csv.reader(text.splitlines()))
        for row in rows[1:]:
            if len(row) != 2:
                raise ConfigError(f"malformed row in {path}: {row}")
            if row[0] not in META_ONLY:
                values[row[0]] = coerce(row[0], row[1])
        return values
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key] = coerce(key, value)
    return values


def resolve(overrides: dict[str, Any], path: Optional[str | Path] = None) -> RunConfig:
    """Defaults, then file values, then ``overrides``; validated."""
    values = read_config_file(path) if path else {}
    for k in overrides:
        if k not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
    values.update(overrides)
    return RunConfig(**values).validate()

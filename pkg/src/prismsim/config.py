"""Experiment configuration.

A config is one YAML (or JSON) mapping.  Keys::

    mode             integrated | vm_only | consensus_only | longest_chain
    n, degree, seed  topology: node count, peers per node, RNG seed
    delay_ms         one-way link propagation delay
    bandwidth_mbps   per directed link
    node_bandwidth_mbps  optional per-node egress cap (off when absent)
    rates            {proposer, voter_per_chain, tx} blocks/s
    m                voter chains
    quorum, k_conf   confirmation rule (quorum defaults to m//2 + 1)
    tick_interval    ledger tick period, simulated seconds
    duration         simulated seconds
    warmup_fraction  share of the run excluded from throughput/latency
    tx_block_capacity
    workload         {app, tx_rate, accounts, zipf}
    vm               {gas_per_second}   omitted = infinitely fast executor
    beta             adversary share of total mining rate
    attack           {strategy, target_level, release_trigger, spam_fraction}
    longest_chain    {rate, k}
    workers          signature verification threads
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .adversary import AttackConfig, Strategy
from .workload import APPS

MODES = ("integrated", "vm_only", "consensus_only", "longest_chain")


class ConfigError(ValueError):
    def __init__(self, problems: List[str]):
        self.problems = problems
        super().__init__("invalid config: " + "; ".join(problems))


@dataclass
class Rates:
    proposer: float = 0.08
    voter_per_chain: float = 0.08
    tx: float = 0.5


@dataclass
class Workload:
    app: str = "payment"
    tx_rate: float = 50.0
    accounts: int = 10_000
    zipf: float = 1.1


@dataclass
class VmConfig:
    gas_per_second: Optional[float] = None


@dataclass
class LongestChainConfig:
    rate: float = 0.1
    k: int = 6


@dataclass
class ExperimentConfig:
    mode: str = "integrated"
    n: int = 10
    degree: int = 4
    seed: int = 1
    delay_ms: float = 120.0
    bandwidth_mbps: float = 100.0
    node_bandwidth_mbps: Optional[float] = None
    rates: Rates = field(default_factory=Rates)
    m: int = 20
    quorum: Optional[int] = None
    k_conf: int = 8
    plurality_fallback: bool = True
    tick_interval: float = 0.1
    duration: float = 600.0
    warmup_fraction: float = 0.1
    tx_block_capacity: int = 200
    workload: Workload = field(default_factory=Workload)
    vm: VmConfig = field(default_factory=VmConfig)
    beta: float = 0.0
    attack: AttackConfig = field(default_factory=AttackConfig)
    longest_chain: LongestChainConfig = field(default_factory=LongestChainConfig)
    workers: int = 1
    log_arrivals: bool = True

    @property
    def effective_quorum(self) -> int:
        return self.quorum if self.quorum is not None else self.m // 2 + 1

    @property
    def warmup(self) -> float:
        return self.duration * self.warmup_fraction

    def problems(self) -> List[str]:
        p = []
        if self.mode not in MODES:
            p.append(f"mode: must be one of {MODES}")
        if self.duration <= 0:
            p.append("duration: must be > 0")
        if not 0 <= self.warmup_fraction < 1:
            p.append("warmup_fraction: must be in [0, 1)")
        if self.workload.app not in APPS:
            p.append(f"workload.app: must be one of {APPS}")
        if self.workload.accounts < 1:
            p.append("workload.accounts: must be >= 1")
        if self.workload.tx_rate < 0:
            p.append("workload.tx_rate: must be >= 0")
        if self.mode == "vm_only":
            return p
        if self.n < 1:
            p.append("n: must be >= 1")
        elif self.n > 1 and (self.degree < 1 or self.degree >= self.n or (self.n * self.degree) % 2):
            p.append("degree: need 1 <= degree < n and n*degree even")
        if self.delay_ms < 0:
            p.append("delay_ms: must be >= 0")
        if self.bandwidth_mbps <= 0:
            p.append("bandwidth_mbps: must be > 0")
        if self.tick_interval <= 0:
            p.append("tick_interval: must be > 0")
        if self.mode == "longest_chain":
            if self.longest_chain.rate <= 0:
                p.append("longest_chain.rate: must be > 0")
            if self.longest_chain.k < 1:
                p.append("longest_chain.k: must be >= 1")
            if self.beta > 0 and self.attack.strategy in (Strategy.PRIVATE_VOTE_WITHHOLD, Strategy.PROPOSER_BALANCE):
                p.append("attack.strategy: mining attacks need a prism mode")
            return p
        if self.m < 1:
            p.append("m: must be >= 1")
        for name in ("proposer", "voter_per_chain", "tx"):
            if getattr(self.rates, name) <= 0:
                p.append(f"rates.{name}: must be > 0")
        if not 1 <= self.effective_quorum <= max(self.m, 1):
            p.append("quorum: must be in [1, m]")
        if self.k_conf < 1:
            p.append("k_conf: must be >= 1")
        p += [f"attack: {e}" for e in self.attack.validate()]
        if not 0 <= self.beta < 0.5:
            p.append("beta: must be in [0, 0.5)")
        if self.workers < 1:
            p.append("workers: must be >= 1")
        return p

    def validate(self) -> "ExperimentConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        self.attack.beta = self.beta
        return self

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["attack"]["strategy"] = self.attack.strategy.value
        d["attack"].pop("beta", None)
        return d


_NESTED = {
    "rates": Rates,
    "workload": Workload,
    "vm": VmConfig,
    "attack": AttackConfig,
    "longest_chain": LongestChainConfig,
}


def _build(cls, data: Dict[str, Any], prefix: str, problems: List[str]):
    names = {f.name for f in dataclasses.fields(cls)}
    if cls is AttackConfig:
        names.discard("beta")
    unknown = sorted(set(data) - names)
    problems += [f"{prefix}{k}: unknown key" for k in unknown]
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            continue
        sub = _NESTED.get(k) if cls is ExperimentConfig else None
        if sub is not None:
            if not isinstance(v, dict):
                problems.append(f"{prefix}{k}: expected a mapping")
                continue
            v = _build(sub, v, f"{prefix}{k}.", problems)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{prefix.rstrip('.') or 'config'}: {exc}")
        return cls()


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    problems: List[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a mapping at top level"])
    cfg = _build(ExperimentConfig, data, "", problems)
    if problems:
        # report value problems alongside unknown keys, skipping keys already named
        named = {q.split(":")[0] for q in problems}
        try:
            problems += [q for q in cfg.problems() if q.split(":")[0] not in named]
        except TypeError as exc:
            problems.append(f"config: {exc}")
        raise ConfigError(problems)
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError([f"config: {exc}"]) from None


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return config_from_dict(data or {})

"""Experiment runner: wires nodes, workload, adversary and network together,
checks run-time invariants and reduces the run to a :class:`MetricsRecord`.

Modes
-----
integrated      Prism nodes, each with its own executor.
consensus_only  Prism nodes, no executor; every confirmed tx counts.
vm_only         one executor fed straight from the generator, no blocks.
longest_chain   single-tree baseline with k-deep confirmation.

Metrics are taken from node 0; invariant counters are summed over all nodes.
"""
from __future__ import annotations

import json
import math
import time as _time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .adversary import Adversary, Strategy
from .config import ExperimentConfig
from .ledger import ConfirmationParams, LedgerEntry
from .longest_chain import LongestChainNode
from .miner import node_rng
from .netsim import EventLog, Simulator, build_topology, make_pool
from .node import Node
from .types import BlockType, Hash, SortitionParams
from .vm import DEFAULT_GAS, Executor, Outcome, TimedReceipt
from .workload import TxSource, WorkloadSampler, genesis_state, make_population

N_SPAM_ACCOUNTS = 100
TOKEN_GRANT = 10**9


# -- closed-form pieces -------------------------------------------------------------

def latency_bound(D: float, m: int, eps: float, c1: float, c2: float) -> float:
    """Confirmation-latency bound ``D*c1 + (D*c2/m) * ln(1/eps)`` in seconds."""
    if not D > 0:
        raise ValueError(f"D must be > 0, got {D}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if not (c1 > 0 and c2 > 0):
        raise ValueError(f"c1 and c2 must be > 0, got {c1}, {c2}")
    return D * c1 + (D * c2 / m) * math.log(1.0 / eps)


def bandwidth_breakdown(log: Union[EventLog, Iterable]) -> Dict[str, Tuple[int, float]]:
    """Bytes of mined (and attacker-released) blocks per type, with percentages."""
    records = log.records if isinstance(log, EventLog) else log
    totals = {k.value: 0 for k in BlockType}
    for r in records:
        if r.etype in ("mine", "release"):
            totals[r.kind] += r.size
    grand = sum(totals.values())
    return {k: (b, 100.0 * b / grand if grand else 0.0) for k, b in totals.items()}


# -- invariant checkers ---------------------------------------------------------------

class PrefixChecker:
    """Keeps the longest emitted ledger seen so far; every node's log must
    agree with it position by position."""

    def __init__(self, n_nodes: int):
        self.canonical: List[Hash] = []
        self.cursor = [0] * n_nodes
        self.violations = 0
        self.first_violation: Optional[Tuple[int, int, float]] = None

    def observe(self, node_id: int, log: Sequence[LedgerEntry], now: float) -> None:
        start = self.cursor[node_id]
        canon = self.canonical
        for pos in range(start, len(log)):
            h = log[pos].tx.hash
            if pos < len(canon):
                if canon[pos] != h:
                    self.violations += 1
                    if self.first_violation is None:
                        self.first_violation = (node_id, pos, now)
            else:
                canon.append(h)
        self.cursor[node_id] = len(log)


def commitment_mismatches(executors: Sequence[Executor]) -> int:
    """Positions where two executors that both reached them disagree."""
    bad = 0
    runs = [e.commitments for e in executors]
    for i in range(max((len(r) for r in runs), default=0)):
        seen = {r[i] for r in runs if len(r) > i}
        bad += len(seen) > 1
    return bad


# -- metrics --------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    mode: str
    seed: int
    duration: float
    warmup: float
    generation_rate: float
    generated_tx: int = 0
    confirmed_tx: int = 0
    confirmed_tx_per_s: float = 0.0
    latency_mean: Optional[float] = None
    latency_p95: Optional[float] = None
    forking_rate: Dict[str, float] = field(default_factory=dict)
    bytes_by_type: Dict[str, int] = field(default_factory=dict)
    percent_by_type: Dict[str, float] = field(default_factory=dict)
    blocks_by_type: Dict[str, int] = field(default_factory=dict)
    success: int = 0
    sanitized: int = 0
    spam: int = 0
    confirmed_levels: int = 0
    reversals: int = 0
    prefix_violations: int = 0
    conservation_violations: int = 0
    duplicate_executions: int = 0
    sanitization_violations: int = 0
    commitment_mismatches: int = 0
    events: int = 0
    attack: Dict[str, object] = field(default_factory=dict)

    def invariants_ok(self) -> bool:
        return not (self.prefix_violations or self.conservation_violations
                    or self.duplicate_executions or self.sanitization_violations
                    or self.commitment_mismatches)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def table(self) -> str:
        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, float):
                return f"{v:.4g}"
            if isinstance(v, dict):
                return ", ".join(f"{k}={fmt(x)}" for k, x in v.items()) or "-"
            return str(v)
        rows = [(k, fmt(v)) for k, v in asdict(self).items()]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def _latency(samples: List[float]) -> Tuple[Optional[float], Optional[float]]:
    if not samples:
        return None, None
    a = np.asarray(samples)
    return float(a.mean()), float(np.percentile(a, 95))


def _outcomes(receipts: Iterable[TimedReceipt]) -> Dict[Outcome, int]:
    c = {o: 0 for o in Outcome}
    for r in receipts:
        c[r.receipt.outcome] += 1
    return c


# -- experiment assembly ----------------------------------------------------------------

@dataclass
class Experiment:
    config: ExperimentConfig
    nodes: list = field(default_factory=list)
    sim: Optional[Simulator] = None
    adversary: Optional[Adversary] = None
    prefix: Optional[PrefixChecker] = None
    gen_times: Dict[Hash, float] = field(default_factory=dict)
    executors: List[Executor] = field(default_factory=list)
    vm_receipts: List[TimedReceipt] = field(default_factory=list)
    metrics: Optional[MetricsRecord] = None
    wall_seconds: float = 0.0


def sortition_params(cfg: ExperimentConfig) -> SortitionParams:
    r = cfg.rates
    return SortitionParams(r.proposer, r.voter_per_chain * cfg.m, r.tx, cfg.m)


def _population(cfg: ExperimentConfig):
    spam = cfg.attack.strategy is Strategy.INVALID_TX_SPAM and cfg.attack.spam_fraction > 0
    return make_population(cfg.workload.accounts, cfg.seed, N_SPAM_ACCOUNTS if spam else 0)


def _sampler(cfg: ExperimentConfig, pop, senders) -> WorkloadSampler:
    spam = cfg.attack.strategy is Strategy.INVALID_TX_SPAM
    return WorkloadSampler(
        senders, pop.accounts, cfg.workload.app, cfg.workload.zipf,
        spam_keys=pop.spam_keys if spam else (),
        spam_fraction=cfg.attack.spam_fraction if spam else 0.0,
    )


def _genesis(cfg: ExperimentConfig, pop):
    return genesis_state(pop, tokens=TOKEN_GRANT if cfg.workload.app == "token" else 0)


def _node_log(node) -> List[LedgerEntry]:
    return node.ledger.log if isinstance(node, Node) else node.log


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    cfg.validate()
    exp = Experiment(cfg)
    if cfg.mode == "vm_only":
        return exp

    pop = _population(cfg)
    n = cfg.n
    topo = build_topology(n, cfg.degree, cfg.seed)
    pool = make_pool(cfg.workers)
    execute = cfg.mode in ("integrated", "longest_chain")

    params = sortition_params(cfg)
    conf = ConfirmationParams(cfg.effective_quorum, cfg.k_conf, cfg.tick_interval, cfg.plurality_fallback)
    attack = cfg.attack
    honest_share = 1.0 - cfg.beta if attack.mines else 1.0

    for j in range(n):
        source = None
        if cfg.workload.tx_rate > 0:
            source = TxSource(
                _sampler(cfg, pop, pop.keys[j::n] or pop.keys),
                cfg.workload.tx_rate / n, node_rng(cfg.seed, 2, j), exp.gen_times,
                phase=(j + 1) / n,
            )
        executor = None
        if execute:
            executor = Executor(_genesis(cfg, pop), DEFAULT_GAS, cfg.vm.gas_per_second, check_conservation=True)
            exp.executors.append(executor)
        rng = node_rng(cfg.seed, 0, j)
        if cfg.mode == "longest_chain":
            node = LongestChainNode(
                j, honest_share * cfg.longest_chain.rate / n, rng, cfg.longest_chain.k,
                pop.directory, cfg.tx_block_capacity, source, executor,
            )
        else:
            node = Node(
                j, params, conf, honest_share * params.total_rate / n, rng, pop.directory,
                cfg.tx_block_capacity, source, executor, cfg.workers, pool,
            )
        exp.nodes.append(node)

    if attack.mines and cfg.mode != "longest_chain":
        exp.adversary = Adversary(n, attack, params, conf, cfg.beta * params.total_rate, node_rng(cfg.seed, 1))

    exp.sim = Simulator(
        exp.nodes, topo,
        delay=cfg.delay_ms / 1000.0,
        bandwidth=cfg.bandwidth_mbps * 1e6,
        tick_interval=cfg.tick_interval,
        attacker=exp.adversary,
        attacker_rng=exp.adversary.rng if exp.adversary else None,
        node_bandwidth=cfg.node_bandwidth_mbps * 1e6 if cfg.node_bandwidth_mbps else None,
        log_arrivals=cfg.log_arrivals,
    )
    exp.prefix = PrefixChecker(n)

    def check_prefix(now: float) -> None:
        for node in exp.nodes:
            exp.prefix.observe(node.id, _node_log(node), now)

    exp.sim.tick_hooks.append(check_prefix)
    return exp


def _run_vm_only(exp: Experiment) -> None:
    """Feed the generator straight into one executor in one-second batches."""
    cfg = exp.config
    pop = _population(cfg)
    sampler = _sampler(cfg, pop, pop.keys)
    executor = Executor(_genesis(cfg, pop), DEFAULT_GAS, cfg.vm.gas_per_second, check_conservation=True)
    exp.executors.append(executor)
    rng = node_rng(cfg.seed, 2, 0)
    rate = cfg.workload.tx_rate
    total = int(math.floor(rate * cfg.duration))
    batch: list = []
    second = 1
    for i in range(total):
        t = (i + 1) / rate
        while t > second:
            exp.vm_receipts.extend(executor.run_block(second, batch, float(second)))
            batch, second = [], second + 1
        tx = sampler.generate_tx(rng)
        exp.gen_times[tx.hash] = t
        batch.append(tx)
    exp.vm_receipts.extend(executor.run_block(second, batch, float(second)))


def collect_metrics(exp: Experiment) -> MetricsRecord:
    cfg = exp.config
    lo, hi = cfg.warmup, cfg.duration
    window = hi - lo
    rec = MetricsRecord(cfg.mode, cfg.seed, cfg.duration, lo, cfg.workload.tx_rate,
                        generated_tx=len(exp.gen_times))
    gen = exp.gen_times

    if cfg.mode == "vm_only":
        receipts = exp.vm_receipts
        ok = [r for r in receipts if r.receipt.outcome is Outcome.SUCCESS and lo < r.finished <= hi]
        rec.confirmed_tx = len(ok)
        rec.latency_mean, rec.latency_p95 = _latency([r.finished - gen[r.tx.hash] for r in ok])
    else:
        ref = exp.nodes[0]
        in_window = [(t, e) for t, e in ref.confirmed if lo < t <= hi]
        if exp.executors:
            receipts = ref.receipts
            ok = [r for r in receipts if r.receipt.outcome is Outcome.SUCCESS and lo < r.finished <= hi]
            rec.confirmed_tx = len(ok)
        else:
            receipts = []
            rec.confirmed_tx = len(in_window)
        rec.latency_mean, rec.latency_p95 = _latency(
            [t - gen[e.tx.hash] for t, e in in_window if e.tx.hash in gen])
        if isinstance(ref, Node):
            st = ref.state
            rec.forking_rate = {"proposer": st.forking_rate("proposer")}
            rec.forking_rate.update({f"voter_{i}": st.forking_rate(i) for i in range(cfg.m)})
            rec.confirmed_levels = ref.ledger.confirmed_level
        else:
            rec.forking_rate = {"chain": ref.forking_rate()}
            rec.confirmed_levels = len(ref.confirmed_blocks)
        bd = bandwidth_breakdown(exp.sim.log)
        rec.bytes_by_type = {k: b for k, (b, _) in bd.items()}
        rec.percent_by_type = {k: p for k, (_, p) in bd.items()}
        counts = {k.value: 0 for k in BlockType}
        for r in exp.sim.log.records:
            if r.etype in ("mine", "release"):
                counts[r.kind] += 1
        rec.blocks_by_type = counts
        rec.reversals = sum(len(nd.reversals) for nd in exp.nodes)
        rec.prefix_violations = exp.prefix.violations

    rec.confirmed_tx_per_s = rec.confirmed_tx / window if window > 0 else 0.0
    c = _outcomes(receipts)
    rec.success, rec.sanitized, rec.spam = c[Outcome.SUCCESS], c[Outcome.SANITIZED], c[Outcome.SPAM]
    rec.conservation_violations = sum(e.conservation_violations for e in exp.executors)
    rec.duplicate_executions = sum(e.duplicate_executions for e in exp.executors)
    rec.sanitization_violations = sum(e.sanitization_violations for e in exp.executors)
    rec.commitment_mismatches = commitment_mismatches(exp.executors)

    att = cfg.attack
    if att.strategy is not Strategy.NONE:
        rec.attack = {"strategy": att.strategy.value, "beta": cfg.beta}
        if exp.adversary is not None:
            rec.attack.update(exp.adversary.stats.as_dict())
        if att.strategy is Strategy.INVALID_TX_SPAM:
            rec.attack["spam_fraction"] = att.spam_fraction
    return rec


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> Experiment:
    """Build, run and measure one experiment; optionally write artifacts."""
    t0 = _time.perf_counter()
    exp = build_experiment(cfg)
    if cfg.mode == "vm_only":
        _run_vm_only(exp)
        events = 0
    else:
        events = exp.sim.run_until(cfg.duration)
    exp.metrics = collect_metrics(exp)
    exp.metrics.events = events
    exp.wall_seconds = _time.perf_counter() - t0
    if out_dir is not None:
        write_artifacts(exp, Path(out_dir))
    return exp


def longest_chain_mode(cfg: ExperimentConfig, out_dir=None) -> MetricsRecord:
    if cfg.mode != "longest_chain":
        raise ValueError("longest_chain_mode needs mode=longest_chain")
    return run_experiment(cfg, out_dir).metrics


def write_artifacts(exp: Experiment, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w") as fh:
        fh.write(exp.metrics.to_json() + "\n")
    (out / "metrics.txt").write_text(exp.metrics.table() + "\n")
    if exp.sim is not None:
        exp.sim.log.write(out / "events.log")
        for node in exp.nodes:
            j = node.id
            (out / f"node{j}.ledger").write_text("".join(e.line() + "\n" for e in _node_log(node)))
            (out / f"node{j}.mined").write_text("".join(r.line() + "\n" for r in node.mined))
            (out / f"node{j}.receipts").write_text("".join(r.receipt.line() + "\n" for r in node.receipts))
    else:
        (out / "vm.receipts").write_text("".join(r.receipt.line() + "\n" for r in exp.vm_receipts))

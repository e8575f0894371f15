"""Deterministic discrete-event gossip network.

Only blocks cross links.  Each directed link is a FIFO pipe: a block waits for
the link to finish serializing earlier blocks, occupies it for
``size_bits / bandwidth`` seconds, and lands ``delay`` seconds after its last
bit left.  Events with equal timestamps are ordered by insertion sequence.
"""
from __future__ import annotations

import heapq
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import networkx as nx

from .miner import next_mining_delay
from .types import Block


class ConfigError(ValueError):
    pass


@dataclass
class Topology:
    n: int
    degree: int
    seed: int
    adjacency: List[List[int]]
    diameter: int = 0
    avg_path_length: float = 0.0

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]


def build_topology(n: int, degree: int, seed: int, max_tries: int = 1000) -> Topology:
    if n < 1:
        raise ConfigError("n must be >= 1")
    if n == 1:
        return Topology(1, 0, seed, [[]])
    if degree < 1 or degree >= n:
        raise ConfigError(f"degree must be in [1, n-1], got degree={degree}, n={n}")
    if (n * degree) % 2:
        raise ConfigError(f"n*degree must be even for a regular graph, got {n}*{degree}")
    for attempt in range(max_tries):
        g = nx.random_regular_graph(degree, n, seed=(seed * 1_000_003 + attempt) % (1 << 32))
        if nx.is_connected(g):
            break
    else:
        raise ConfigError(f"no connected {degree}-regular graph on {n} nodes after {max_tries} tries")
    adjacency = [sorted(g.neighbors(u)) for u in range(n)]
    return Topology(
        n, degree, seed, adjacency,
        diameter=nx.diameter(g),
        avg_path_length=nx.average_shortest_path_length(g),
    )


def complete_topology(n: int) -> Topology:
    adj = [[v for v in range(n) if v != u] for u in range(n)]
    return Topology(n, n - 1, 0, adj, diameter=1 if n > 1 else 0, avg_path_length=1.0 if n > 1 else 0.0)


@dataclass
class Link:
    delay: float = 0.120
    bandwidth: float = 3e8
    busy_until: float = 0.0
    bits_sent: int = 0
    busy_time: float = 0.0


def send_block(link: Link, block, now: float) -> float:
    """Queue ``block`` (or a byte count) on ``link``; returns its arrival time."""
    size = block if isinstance(block, int) else block.size
    bits = 8 * size
    start = max(now, link.busy_until)
    tx_time = bits / link.bandwidth
    link.busy_until = start + tx_time
    link.bits_sent += bits
    link.busy_time += tx_time
    return link.busy_until + link.delay


MINE = "mine"
ARRIVAL = "arrival"
TICK = "tick"


class EventQueue:
    def __init__(self):
        self._heap: List[Tuple[float, int, str, Any]] = []
        self._seq = itertools.count()

    def push(self, time: float, kind: str, payload: Any = None) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def pop(self) -> Tuple[float, int, str, Any]:
        return heapq.heappop(self._heap)

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class EventRecord:
    time: float
    node: int
    etype: str
    block: str
    size: int
    kind: str

    def line(self) -> str:
        return f"{self.time:.9f} {self.node} {self.etype} {self.block} {self.size} {self.kind}"

    @classmethod
    def parse(cls, line: str) -> "EventRecord":
        t, node, etype, block, size, kind = line.split()
        return cls(float(t), int(node), etype, block, int(size), kind)


@dataclass
class EventLog:
    records: List[EventRecord] = field(default_factory=list)

    def add(self, time: float, node: int, etype: str, block: Optional[Block] = None, note: str = "-") -> None:
        if block is None:
            self.records.append(EventRecord(time, node, etype, note, 0, "-"))
        else:
            self.records.append(EventRecord(time, node, etype, block.hash.hex(), block.size, block.kind.value))

    def lines(self) -> List[str]:
        return [r.line() for r in self.records]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.text())

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path) as fh:
            return cls([EventRecord.parse(line) for line in fh if line.strip()])


class SimNode(Protocol):
    id: int
    rate: float

    def mine(self, now: float) -> Optional[Block]: ...
    def receive(self, block: Block, now: float) -> bool: ...
    def tick(self, now: float) -> Any: ...


class Attacker(Protocol):
    id: int
    rate: float

    def on_mine(self, now: float) -> List[Block]: ...
    def observe(self, block: Block, now: float) -> List[Block]: ...
    def on_tick(self, now: float, nodes: Sequence[SimNode]) -> List[Block]: ...


class Simulator:
    """Single-strand event loop over honest nodes plus an optional attacker.

    The attacker sees every honest block the instant it is mined and its
    releases reach every honest node with zero delay.
    """

    def __init__(
        self,
        nodes: Sequence[SimNode],
        topology: Topology,
        delay: float = 0.120,
        bandwidth: float = 3e8,
        tick_interval: float = 0.1,
        rngs: Optional[Sequence] = None,
        attacker: Optional[Attacker] = None,
        attacker_rng=None,
        node_bandwidth: Optional[float] = None,
        log_arrivals: bool = True,
    ):
        if len(nodes) != topology.n:
            raise ConfigError("node count does not match topology")
        self.nodes = list(nodes)
        self.topology = topology
        self.tick_interval = tick_interval
        self.links: Dict[Tuple[int, int], Link] = {
            (u, v): Link(delay, bandwidth)
            for u in range(topology.n) for v in topology.adjacency[u]
        }
        self.node_links: Optional[List[Link]] = (
            [Link(0.0, node_bandwidth) for _ in range(topology.n)] if node_bandwidth else None
        )
        self.rngs = list(rngs) if rngs is not None else [n.rng for n in nodes]
        self.attacker = attacker
        self.attacker_rng = attacker_rng
        self.queue = EventQueue()
        self.log = EventLog()
        self.log_arrivals = log_arrivals
        self.now = 0.0
        self.tick_hooks: List[Callable[[float], None]] = []
        self.receptions = 0
        self.message_types: set = set()
        self._started = False

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for node, rng in zip(self.nodes, self.rngs):
            self.queue.push(next_mining_delay(node.rate, rng), MINE, node.id)
        if self.attacker is not None and self.attacker.rate > 0:
            self.queue.push(next_mining_delay(self.attacker.rate, self.attacker_rng), MINE, self.attacker.id)
        self.queue.push(self.tick_interval, TICK)

    def run_until(self, t_end: float) -> int:
        if t_end < self.now:
            raise ValueError("t_end is in the past")
        self.start()
        count = 0
        while self.queue and self.queue.peek_time() <= t_end:
            time, _, kind, payload = self.queue.pop()
            self.now = time
            count += 1
            if kind == MINE:
                self._on_mine(payload)
            elif kind == ARRIVAL:
                node_id, block, sender = payload
                self.on_block_arrival(node_id, block, sender)
            elif kind == TICK:
                self._on_tick()
        self.now = t_end
        return count

    # -- handlers -----------------------------------------------------------

    def _on_mine(self, node_id: int) -> None:
        now = self.now
        att = self.attacker
        if att is not None and node_id == att.id:
            self._release(att.on_mine(now))
            self.queue.push(now + next_mining_delay(att.rate, self.attacker_rng), MINE, node_id)
            return
        node = self.nodes[node_id]
        block = node.mine(now)
        self.queue.push(now + next_mining_delay(node.rate, self.rngs[node_id]), MINE, node_id)
        if block is None:
            return
        self.log.add(now, node_id, "mine", block)
        self._broadcast(node_id, block, exclude=None)
        if att is not None:
            self._release(att.observe(block, now))

    def on_block_arrival(self, node_id: int, block: Block, sender: int) -> List[int]:
        """Insert a block arriving at ``node_id`` and relay it if it is new."""
        self.receptions += 1
        self.message_types.add(type(block).__name__)
        node = self.nodes[node_id]
        if not node.receive(block, self.now):
            if self.log_arrivals:
                self.log.add(self.now, node_id, "dup", block)
            return []
        if self.log_arrivals:
            self.log.add(self.now, node_id, "recv", block)
        return self._broadcast(node_id, block, exclude=sender)

    def _broadcast(self, origin: int, block: Block, exclude: Optional[int]) -> List[int]:
        targets = [v for v in self.topology.adjacency[origin] if v != exclude]
        now = self.now
        for v in targets:
            t = now
            if self.node_links is not None:
                t = send_block(self.node_links[origin], block, t)
            arrival = send_block(self.links[(origin, v)], block, t)
            self.queue.push(arrival, ARRIVAL, (v, block, origin))
        return targets

    def _release(self, blocks: List[Block]) -> None:
        if not blocks:
            return
        att = self.attacker
        for block in blocks:
            self.log.add(self.now, att.id, "release", block)
            for v in range(len(self.nodes)):
                self.queue.push(self.now, ARRIVAL, (v, block, att.id))

    def _on_tick(self) -> None:
        now = self.now
        for node in self.nodes:
            leaders = node.tick(now)
            if leaders:
                for h in leaders:
                    self.log.add(now, node.id, "confirm", note=h.hex())
        for hook in self.tick_hooks:
            hook(now)
        if self.attacker is not None:
            self._release(self.attacker.on_tick(now, self.nodes))
        self.queue.push(now + self.tick_interval, TICK)

    def link_stats(self) -> Dict[str, float]:
        bits = sum(link.bits_sent for link in self.links.values())
        busy = sum(link.busy_time for link in self.links.values())
        return {"bits_sent": bits, "busy_time": busy}


def make_pool(workers: int) -> Optional[ThreadPoolExecutor]:
    return ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

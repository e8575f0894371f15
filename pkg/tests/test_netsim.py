import random

import networkx as nx
import numpy as np
import pytest

from prismsim.ledger import ConfirmationParams
from prismsim.miner import node_rng
from prismsim.netsim import (
    ConfigError,
    EventLog,
    EventRecord,
    Link,
    Simulator,
    build_topology,
    complete_topology,
    send_block,
)
from prismsim.node import Node
from prismsim.types import SortitionParams

from conftest import txblock


def test_regular_connected_topology():
    t = build_topology(100, 4, seed=9)
    g = nx.Graph(t.edges)
    assert nx.is_connected(g)
    assert all(len(a) == 4 for a in t.adjacency)
    assert all(u not in a and len(set(a)) == len(a) for u, a in enumerate(t.adjacency))
    assert t.diameter == nx.diameter(g) and t.diameter >= 4
    assert 3.0 < t.avg_path_length < 4.5


def test_two_nodes_single_edge():
    assert build_topology(2, 1, seed=0).edges == [(0, 1)]


def test_topology_seed_determinism():
    assert build_topology(30, 4, 5).adjacency == build_topology(30, 4, 5).adjacency
    assert build_topology(30, 4, 5).adjacency != build_topology(30, 4, 6).adjacency


@pytest.mark.parametrize("n,d", [(5, 3), (4, 4), (3, 0)])
def test_infeasible_topology(n, d):
    with pytest.raises(ConfigError):
        build_topology(n, d, 1)


def test_idle_link_formula():
    link = Link(delay=0.12, bandwidth=100e6)
    assert send_block(link, 125_000, now=2.0) == pytest.approx(2.0 + 0.01 + 0.12)
    assert link.busy_until == pytest.approx(2.01)


def test_back_to_back_blocks():
    link = Link(delay=0.12, bandwidth=1e6)
    a = send_block(link, 1000, 0.0)
    b = send_block(link, 1000, 0.0)
    assert b - a == pytest.approx(8000 / 1e6)


def test_block_train_matches_queue_oracle():
    rng = random.Random(4)
    link = Link(delay=0.05, bandwidth=2e6)
    t, free = 0.0, 0.0
    for _ in range(500):
        t += rng.expovariate(20)
        size = rng.randint(100, 50_000)
        start = max(t, free)
        free = start + 8 * size / 2e6
        assert send_block(link, size, t) == pytest.approx(free + 0.05, abs=1e-12)
    assert link.bits_sent <= link.bandwidth * link.busy_time * (1 + 1e-12)


class Stub:
    """Node that mines exactly one block (node 0 only) and accepts each hash once."""

    def __init__(self, i):
        self.id, self.rate, self.rng = i, 1e-9, np.random.default_rng(i)
        self.seen = set()
        self.block = txblock() if i == 0 else None

    def mine(self, now):
        return None

    def receive(self, block, now):
        if block.hash in self.seen:
            return False
        self.seen.add(block.hash)
        return True

    def tick(self, now):
        return []


def _stub_sim(n=20, degree=4):
    topo = build_topology(n, degree, 3)
    nodes = [Stub(i) for i in range(n)]
    return Simulator(nodes, topo, delay=0.1, bandwidth=1e8, tick_interval=100.0), nodes, topo


def test_flood_reaches_everyone_once():
    sim, nodes, topo = _stub_sim()
    b = nodes[0].block
    nodes[0].receive(b, 0.0)
    sim._broadcast(0, b, exclude=None)
    sim.run_until(50.0)
    assert all(b.hash in nd.seen for nd in nodes)
    assert sim.receptions <= 2 * len(topo.edges)
    recv = [r for r in sim.log.records if r.etype == "recv"]
    assert len(recv) == len(nodes) - 1
    assert sim.message_types == {"Block"}


def test_relay_excludes_sender_and_drops_duplicates():
    sim, nodes, topo = _stub_sim()
    b = txblock()
    peer = topo.adjacency[5][0]
    out = sim.on_block_arrival(5, b, sender=peer)
    assert sorted(out) == sorted(v for v in topo.adjacency[5] if v != peer)
    assert sim.on_block_arrival(5, b, sender=topo.adjacency[5][1]) == []


def test_nothing_before_first_event():
    sim, _, _ = _stub_sim()
    assert sim.run_until(0.0) == 0
    with pytest.raises(ValueError):
        sim.run_until(-1.0)


def _prism_sim(seed, scale=1.0, n=6):
    params = SortitionParams(0.1 * scale, 0.6 * scale, 0.3 * scale, 3)
    conf = ConfirmationParams(2, 2)
    nodes = [Node(j, params, conf, params.total_rate / n, node_rng(seed, 0, j)) for j in range(n)]
    return Simulator(nodes, build_topology(n, 2, seed), tick_interval=1.0)


def test_runs_are_byte_identical():
    a, b = _prism_sim(11), _prism_sim(11)
    assert a.run_until(300) == b.run_until(300)
    assert a.log.text() == b.log.text()
    c = _prism_sim(12)
    c.run_until(300)
    assert c.log.text() != a.log.text()


def test_doubled_rates_double_mining_events():
    counts = []
    for scale in (1.0, 2.0):
        sim = _prism_sim(21, scale)
        sim.run_until(2000)
        counts.append(sum(r.etype == "mine" for r in sim.log.records))
    # 2000 blocks expected at scale 1; Poisson sd ~ 45
    assert 1850 < counts[0] < 2150
    assert abs(counts[1] / counts[0] - 2.0) < 0.12


def test_event_log_round_trip(tmp_path):
    sim = _prism_sim(3)
    sim.run_until(50)
    p = tmp_path / "events.log"
    sim.log.write(p)
    assert EventLog.read(p).lines() == sim.log.lines()
    rec = EventRecord(1.5, 2, "mine", "ab", 10, "voter")
    assert EventRecord.parse(rec.line()) == rec


def test_complete_topology():
    t = complete_topology(5)
    assert all(len(a) == 4 for a in t.adjacency) and t.diameter == 1

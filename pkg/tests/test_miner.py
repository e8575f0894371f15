import numpy as np
import pytest

from prismsim.blocktree import BlocktreeState, insert_all
from prismsim.miner import (
    Mempool,
    MinerConfig,
    assemble,
    grind,
    mempool_update,
    mine_block,
    next_mining_delay,
    node_rng,
)
from prismsim.types import (
    BlockType,
    ProposerPayload,
    SortitionParams,
    Slot,
    TransactionPayload,
    VoterPayload,
    proposer_genesis,
    slot_matches,
    sortition,
)

from conftest import payment, proposer, txblock

PG = proposer_genesis().hash
PARAMS = SortitionParams(1.0, 3.0, 1.0, 3)


def test_exponential_moments():
    rng = np.random.default_rng(1)
    xs = np.array([next_mining_delay(1.0, rng) for _ in range(100_000)])
    assert abs(xs.mean() - 1.0) < 0.01
    assert abs(xs.var() - 1.0) < 0.05
    assert (xs > 0).all()


def test_doubled_rate_halves_mean():
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    m1 = np.mean([next_mining_delay(1.0, r1) for _ in range(50_000)])
    m2 = np.mean([next_mining_delay(2.0, r2) for _ in range(50_000)])
    assert abs(m2 / m1 - 0.5) < 0.01


def test_bad_rate_rejected():
    with pytest.raises(ValueError):
        next_mining_delay(0.0, np.random.default_rng(0))


def test_transaction_block_takes_mempool_in_order(alice):
    s = BlocktreeState(PARAMS)
    mp = Mempool()
    txs = [payment(alice, i) for i in range(5)]
    for t in txs:
        mp.add(t)
    b = mine_block(MinerConfig(1.0, PARAMS), s, mp, np.random.default_rng(0), slot=Slot(BlockType.TRANSACTION))
    assert b.content.txs == tuple(txs)
    assert slot_matches(b, PARAMS)


def test_empty_mempool_gives_empty_tx_block():
    s = BlocktreeState(PARAMS)
    b = mine_block(MinerConfig(1.0, PARAMS), s, Mempool(), np.random.default_rng(0), slot=Slot(BlockType.TRANSACTION))
    assert b.content == TransactionPayload(())


def test_voter_votes_first_received_per_unvoted_level():
    s = BlocktreeState(PARAMS, check_sortition=False)
    p1 = proposer(PG, 1, proposer_refs=[PG])
    p1b = proposer(PG, 1, proposer_refs=[PG])
    p2 = proposer(p1.hash, 2, proposer_refs=[p1.hash])
    s.insert_block(p1, now=1.0)
    s.insert_block(p1b, now=2.0)
    s.insert_block(p2, now=3.0)
    parent, content = assemble(Slot(BlockType.VOTER, 2), s, Mempool(), 200)
    assert parent == s.chains[2].tip
    assert content.votes == ((1, p1.hash), (2, p2.hash))


def test_proposer_refs_unreferenced_tx_in_arrival_order():
    s = BlocktreeState(PARAMS, check_sortition=False)
    b2, b1 = txblock(), txblock()
    s.insert_block(b2, now=1.0)
    s.insert_block(b1, now=2.0)
    parent, content = assemble(Slot(BlockType.PROPOSER), s, Mempool(), 200)
    replay = [h for h in s.arrival_log if h in s.tx_blocks]
    assert parent == PG
    assert content.level == 1
    assert list(content.tx_refs) == replay == [b2.hash, b1.hash]
    assert content.proposer_refs == (PG,)


def test_grind_lands_in_slot():
    rng = np.random.default_rng(2)
    for chain in range(3):
        b = grind(PG, 0, 0.0, VoterPayload(chain), PARAMS, rng)
        assert sortition(b.hash, PARAMS) == Slot(BlockType.VOTER, chain)


def test_mempool_purge_counts(alice):
    mp = Mempool()
    txs = [payment(alice, i) for i in range(10)]
    for t in txs:
        mp.add(t)
    assert mempool_update(mp, txblock(txs[2:5])) == 3
    assert len(mp) == 7
    assert mempool_update(mp, txblock([payment(alice, 99)])) == 0
    assert mempool_update(mp, proposer(PG, 1)) == 0


def test_mempool_rejects_duplicates_and_overflow(alice):
    mp = Mempool(capacity=2)
    t0, t1, t2 = (payment(alice, i) for i in range(3))
    assert mp.add(t0) and not mp.add(t0)
    assert mp.add(t1) and not mp.add(t2)
    assert [t.hash for t in mp.peek(5)] == [t0.hash, t1.hash]


def test_node_rng_streams_independent_and_stable():
    a = node_rng(7, 0, 1).random(4)
    assert np.array_equal(a, node_rng(7, 0, 1).random(4))
    assert not np.array_equal(a, node_rng(7, 0, 2).random(4))

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from prismsim.blocktree import PROPOSER_TREE, BlocktreeState, InsertStatus, insert_all
from prismsim.types import (
    BlockType,
    KeyDirectory,
    ProposerPayload,
    SortitionParams,
    VoterPayload,
    make_block,
    proposer_genesis,
    sortition,
    voter_genesis,
)

from conftest import payment, proposer, txblock, voter
from scenarios import brute_vote_table, params_for, random_history

PG = proposer_genesis().hash


def state(m=3, **kw):
    return BlocktreeState(params_for(m), check_sortition=False, **kw)


def test_voter_extends_tip():
    s = state()
    b = voter(voter_genesis(0).hash, 0)
    assert s.insert_block(b).status is InsertStatus.ACCEPTED
    assert s.longest_chain_tip(0) == b.hash
    assert s.chains[0].tip_depth == 1


def test_buffered_until_tx_block_arrives():
    s = state()
    tb = txblock()
    p = proposer(PG, 1, tx_refs=[tb.hash], proposer_refs=[PG])
    assert s.insert_block(p).status is InsertStatus.BUFFERED
    assert p.hash in s.pending
    out = s.insert_block(tb)
    assert out.status is InsertStatus.ACCEPTED
    assert out.newly_unbuffered == [p.hash]
    assert s.proposer_tip == p.hash and not s.pending


def test_duplicate_is_noop():
    s = state()
    b = voter(voter_genesis(1).hash, 1)
    s.insert_block(b)
    before = s.dump()
    out = s.insert_block(b)
    assert out.status is InsertStatus.ACCEPTED and out.duplicate
    assert s.dump() == before


def test_genesis_only_tip():
    s = state()
    assert s.longest_chain_tip(PROPOSER_TREE) == PG
    assert s.longest_chain_tip(2) == voter_genesis(2).hash


def test_equal_depth_tie_goes_to_smaller_hash():
    s = state()
    g = voter_genesis(0).hash
    a1 = voter(g, 0); a2 = voter(a1.hash, 0); a3 = voter(a2.hash, 0)
    b1 = voter(g, 0); b2 = voter(b1.hash, 0); b3 = voter(b2.hash, 0)
    insert_all(s, [a1, a2, a3, b1, b2, b3])
    assert s.longest_chain_tip(0) == min(a3.hash, b3.hash)


def test_sortition_mismatch_rejected():
    p = SortitionParams(1.0, 1.0, 1.0, 1)
    s = BlocktreeState(p)
    n = 0
    while True:
        b = voter(voter_genesis(0).hash, 0, nonce=10_000 + n)
        if sortition(b.hash, p).kind is not BlockType.VOTER:
            break
        n += 1
    assert s.insert_block(b).status is InsertStatus.REJECTED_INVALID


def test_bad_signature_rejected(alice):
    keys = KeyDirectory()
    keys.register(alice)
    s = state(keys=keys)
    good = txblock([payment(alice, 0)])
    bad = txblock([payment(alice, 1).with_signature(b"\x00" * 32)])
    assert s.insert_block(good).status is InsertStatus.ACCEPTED
    assert s.insert_block(bad).status is InsertStatus.REJECTED_INVALID


def test_wrong_level_rejected():
    s = state()
    bad = make_block(PG, 0, 0.0, 5, ProposerPayload(2, (), (PG,)))
    assert s.insert_block(bad).status is InsertStatus.REJECTED_INVALID


def test_unvoted_levels():
    s = state()
    p1 = proposer(PG, 1, proposer_refs=[PG])
    p2 = proposer(p1.hash, 2, proposer_refs=[p1.hash])
    p3 = proposer(p2.hash, 3, proposer_refs=[p2.hash])
    insert_all(s, [p1, p2, p3])
    assert s.unvoted_levels(0) == [1, 2, 3]
    s.insert_block(voter(voter_genesis(0).hash, 0, [(1, p1.hash), (2, p2.hash)]))
    assert s.unvoted_levels(0) == [3]


def test_reorg_restores_orphaned_levels():
    s = state()
    p1 = proposer(PG, 1, proposer_refs=[PG])
    p2 = proposer(p1.hash, 2, proposer_refs=[p1.hash])
    insert_all(s, [p1, p2])
    g = voter_genesis(0).hash
    v = voter(g, 0, [(1, p1.hash), (2, p2.hash)])
    s.insert_block(v)
    assert s.unvoted_levels(0) == []
    f1 = voter(g, 0, [(1, p1.hash)])
    f2 = voter(f1.hash, 0)
    insert_all(s, [f1, f2])
    assert s.longest_chain_tip(0) == f2.hash
    assert s.unvoted_levels(0) == [2]
    fresh = state()
    insert_all(fresh, [p1, p2, f1, f2, v])
    assert fresh.chains[0].votes == s.chains[0].votes


def test_count_votes_five_chains():
    s = state(m=5)
    p1 = proposer(PG, 1, proposer_refs=[PG])
    s.insert_block(p1)
    for i in range(5):
        b = voter(voter_genesis(i).hash, i, [(1, p1.hash)])
        s.insert_block(b)
        if i < 4:  # four chains get one more block on top
            s.insert_block(voter(b.hash, i))
    assert s.count_votes(1) == {p1.hash: (5, 1)}


def test_vote_on_fork_excluded():
    s = state(m=1)
    p1 = proposer(PG, 1, proposer_refs=[PG])
    s.insert_block(p1)
    g = voter_genesis(0).hash
    a1 = voter(g, 0); a2 = voter(a1.hash, 0)
    fork = voter(g, 0, [(1, p1.hash)])
    insert_all(s, [a1, a2, fork])
    assert s.count_votes(1) == {}


def test_forking_rate_formula():
    s = state(m=1)
    g = voter_genesis(0).hash
    prev = g
    for _ in range(10):
        b = voter(prev, 0); s.insert_block(b); prev = b.hash
    assert s.forking_rate(0) == 0.0
    main = [g]
    s2 = state(m=1)
    for _ in range(90):
        b = voter(main[-1], 0); s2.insert_block(b); main.append(b.hash)
    for k in range(10):
        s2.insert_block(voter(main[k], 0))
    assert abs(s2.forking_rate(0) - 0.1) < 1e-12


def test_random_tree_tip_matches_scan():
    rng = random.Random(3)
    s = state(m=1)
    g = voter_genesis(0).hash
    nodes = [g]
    depth = {g: 0}
    for _ in range(30):
        parent = rng.choice(nodes)
        b = voter(parent, 0)
        s.insert_block(b)
        nodes.append(b.hash)
        depth[b.hash] = depth[parent] + 1
    want = min(nodes, key=lambda h: (-depth[h], h))
    assert s.longest_chain_tip(0) == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_insertion_order_independent(seed):
    rng = random.Random(seed)
    blocks = random_history(rng, m=3, levels=4, voter_blocks=30)[:50]
    a = state()
    insert_all(a, blocks)
    shuffled = blocks[:]
    rng.shuffle(shuffled)
    b = state()
    insert_all(b, shuffled)
    assert not b.pending
    assert a.dump() == b.dump()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_votes_match_recount_after_every_insert(seed):
    rng = random.Random(seed)
    m = 4
    blocks = random_history(rng, m=m, levels=3, voter_blocks=25)
    s = state(m=m)
    tips = [0] * m
    for k, b in enumerate(blocks):
        s.insert_block(b)
        for i in range(m):
            assert s.chains[i].tip_depth >= tips[i]
            tips[i] = s.chains[i].tip_depth
    table = brute_vote_table(blocks, m)
    for i in range(m):
        got = {lv: (t, s.chains[i].tip_depth - d + 1) for lv, (t, d) in s.chains[i].votes.items()}
        assert got == table[i]

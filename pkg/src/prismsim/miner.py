"""Poisson mining, the mempool, and block assembly.

Mining is simulated: the time to the next block is exponential in the node's
rate.  On a mining event the miner first draws the sortition slot (a uniform
256-bit value, the same law as a header hash), builds the content for that
slot, then grinds the header nonce until the header hash itself falls in the
slot's range.  Receivers therefore see ordinary blocks whose hash sortitions
to their own content type.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from .blocktree import BlocktreeState
from .types import (
    ZERO_HASH,
    Block,
    BlockContent,
    BlockHeader,
    BlockType,
    Hash,
    ProposerPayload,
    SortitionParams,
    Slot,
    Transaction,
    TransactionPayload,
    VoterPayload,
    encode_content,
    sha256,
    slot_of,
    sortition,
)

MAX_GRIND = 10_000_000


class Mempool:
    def __init__(self, capacity: int = 500_000):
        self.capacity = capacity
        self.pending: "OrderedDict[Hash, Transaction]" = OrderedDict()
        self.dropped = 0

    def __len__(self) -> int:
        return len(self.pending)

    def __contains__(self, h: Hash) -> bool:
        return h in self.pending

    def add(self, tx: Transaction) -> bool:
        h = tx.hash
        if h in self.pending:
            return False
        if len(self.pending) >= self.capacity:
            self.dropped += 1
            return False
        self.pending[h] = tx
        return True

    def peek(self, n: int) -> List[Transaction]:
        out = []
        for tx in self.pending.values():
            if len(out) >= n:
                break
            out.append(tx)
        return out


def mempool_update(mempool: Mempool, block: Block) -> int:
    if not isinstance(block.content, TransactionPayload):
        return 0
    purged = 0
    for tx in block.content.txs:
        if mempool.pending.pop(tx.hash, None) is not None:
            purged += 1
    return purged


@dataclass
class MinerConfig:
    node_rate: float
    sortition: SortitionParams
    tx_block_capacity: int = 200

    def __post_init__(self):
        if self.node_rate <= 0:
            raise ValueError("node_rate must be > 0")


def next_mining_delay(rate: float, rng: np.random.Generator) -> float:
    if rate <= 0:
        raise ValueError("rate must be > 0")
    while True:
        d = float(rng.exponential(1.0 / rate))
        if d > 0.0:
            return d


def draw_slot(params: SortitionParams, rng: np.random.Generator) -> Slot:
    return slot_of(int.from_bytes(rng.bytes(32), "big"), params)


def grind(
    parent: Hash,
    miner_id: int,
    timestamp: float,
    content: BlockContent,
    params: SortitionParams,
    rng: np.random.Generator,
    check: bool = True,
) -> Block:
    """Search nonces until the header hash sortitions to ``content``'s slot."""
    root = sha256(encode_content(content))
    prefix = parent + struct.pack(">Id", miner_id, float(timestamp))
    want = Slot(content.kind, getattr(content, "chain_index", None)) if check else None
    for _ in range(MAX_GRIND):
        nonce = int(rng.integers(0, 1 << 64, dtype=np.uint64))
        h = sha256(prefix, struct.pack(">Q", nonce), root)
        if want is None or sortition(h, params) == want:
            return Block(BlockHeader(parent, miner_id, float(timestamp), nonce, root), content)
    raise RuntimeError("nonce search exhausted; sortition slot probability too small")


def assemble(
    slot: Slot, state: BlocktreeState, mempool: Mempool, capacity: int
) -> tuple:
    """(parent, content) an honest miner builds for ``slot`` from its view."""
    if slot.kind is BlockType.PROPOSER:
        tip = state.proposer_tip
        content = ProposerPayload(
            level=state.proposer_level[tip] + 1,
            tx_refs=tuple(state.unreferenced_tx),
            proposer_refs=tuple(state.unreferenced_proposers),
        )
        return tip, content
    if slot.kind is BlockType.VOTER:
        i = slot.chain
        votes = []
        for level in state.unvoted_levels(i):
            target = state.first_received(level)
            if target is not None:
                votes.append((level, target))
        return state.chains[i].tip, VoterPayload(i, tuple(votes))
    return ZERO_HASH, TransactionPayload(tuple(mempool.peek(capacity)))


def mine_block(
    config: MinerConfig,
    state: BlocktreeState,
    mempool: Mempool,
    rng: np.random.Generator,
    miner_id: int = 0,
    now: float = 0.0,
    slot: Optional[Slot] = None,
) -> Block:
    if slot is None:
        slot = draw_slot(config.sortition, rng)
    parent, content = assemble(slot, state, mempool, config.tx_block_capacity)
    return grind(parent, miner_id, now, content, config.sortition, rng)


def node_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for (seed, path...), stable across runs."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *path]))

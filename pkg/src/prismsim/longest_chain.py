"""Longest-chain baseline: one tree, every block carries transactions,
confirmation once a block is ``k`` deep on the longest chain."""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np

from .ledger import LedgerEntry
from .miner import Mempool, grind, mempool_update
from .node import MinedRecord, Reversal
from .types import ZERO_HASH, Block, Hash, KeyDirectory, SortitionParams, TransactionPayload, make_block, verify_batch
from .vm import Executor, TimedReceipt

GENESIS = make_block(ZERO_HASH, 0, 0.0, 0, TransactionPayload(()))


class ChainTree:
    def __init__(self):
        self.blocks: Dict[Hash, Block] = {GENESIS.hash: GENESIS}
        self.depth: Dict[Hash, int] = {GENESIS.hash: 0}
        self.tip: Hash = GENESIS.hash
        self.pending: Dict[Hash, List[Block]] = {}

    def insert(self, block: Block) -> None:
        if block.parent not in self.blocks:
            self.pending.setdefault(block.parent, []).append(block)
            return
        work = [block]
        while work:
            b = work.pop()
            h = b.hash
            self.blocks[h] = b
            d = self.depth[h] = self.depth[b.parent] + 1
            tip_d = self.depth[self.tip]
            if d > tip_d or (d == tip_d and h < self.tip):
                self.tip = h
            work.extend(self.pending.pop(h, ()))

    def chain(self) -> List[Hash]:
        out = []
        h = self.tip
        while h != GENESIS.hash:
            out.append(h)
            h = self.blocks[h].parent
        out.reverse()
        return out

    def forking_rate(self) -> float:
        total = len(self.blocks) - 1
        return 0.0 if total <= 0 else 1.0 - self.depth[self.tip] / total


class LongestChainNode:
    def __init__(
        self,
        node_id: int,
        rate: float,
        rng: np.random.Generator,
        k: int = 6,
        keys: Optional[KeyDirectory] = None,
        capacity: int = 200,
        source=None,
        executor: Optional[Executor] = None,
        params: Optional[SortitionParams] = None,
    ):
        self.id = node_id
        self.rate = rate
        self.rng = rng
        self.k = k
        self.keys = keys
        self.capacity = capacity
        self.source = source
        self.executor = executor
        self.params = params or SortitionParams(1.0, 1.0, 1.0, 1)
        self.tree = ChainTree()
        self.mempool = Mempool()
        self.seen = {GENESIS.hash}
        self.confirmed_blocks: List[Hash] = []
        self.log: List[LedgerEntry] = []
        self.seen_txs: set = set()
        self.mined: List[MinedRecord] = []
        self.receipts: List[TimedReceipt] = []
        self.confirmed: List[Tuple[float, LedgerEntry]] = []
        self.reversals: List[Reversal] = []
        self.rejected = 0
        self._dirty = False

    def mine(self, now: float) -> Block:
        if self.source is not None:
            self.source.generate_until(now, self.mempool)
        content = TransactionPayload(tuple(self.mempool.peek(self.capacity)))
        block = grind(self.tree.tip, self.id, now, content, self.params, self.rng, check=False)
        self.receive(block, now)
        self.mined.append(MinedRecord(now, "transaction", block.size, len(content.txs), block.hash.hex()))
        return block

    def receive(self, block: Block, now: float) -> bool:
        if block.hash in self.seen:
            return False
        self.seen.add(block.hash)
        if self.keys is not None and not all(verify_batch(block.content.txs, self.keys)):
            self.rejected += 1
            return True
        self.tree.insert(block)
        mempool_update(self.mempool, block)
        self._dirty = True
        return True

    def tick(self, now: float) -> List[Hash]:
        if not self._dirty:
            return []
        self._dirty = False
        chain = self.tree.chain()
        n_conf = max(0, len(chain) - self.k + 1)
        done = len(self.confirmed_blocks)
        for pos in range(min(done, n_conf)):
            if chain[pos] != self.confirmed_blocks[pos]:
                self.reversals.append(Reversal(self.id, pos + 1, self.confirmed_blocks[pos], chain[pos], now))
                break
        new = [h for h in chain[done:n_conf]]
        entries: List[LedgerEntry] = []
        for depth, h in enumerate(new, start=done + 1):
            self.confirmed_blocks.append(h)
            for tx in self.tree.blocks[h].content.txs:
                if tx.hash in self.seen_txs:
                    continue
                self.seen_txs.add(tx.hash)
                e = LedgerEntry(len(self.log), tx, h, depth)
                self.log.append(e)
                entries.append(e)
                self.confirmed.append((now, e))
            if self.executor is not None:
                batch = [e.tx for e in entries if e.source == h]
                self.receipts.extend(self.executor.run_block(depth, batch, now))
        return new

    def forking_rate(self) -> float:
        return self.tree.forking_rate()

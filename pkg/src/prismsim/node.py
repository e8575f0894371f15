"""Honest full node: blocktree + mempool + ledger manager + executor."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .blocktree import BlocktreeState, InsertStatus
from .ledger import ConfirmationParams, ConfirmedLedger, LedgerEntry, ledger_tick
from .miner import Mempool, MinerConfig, mempool_update, mine_block
from .types import Block, BlockType, Hash, KeyDirectory, SortitionParams, TransactionPayload, verify_batch
from .vm import Executor, TimedReceipt


@dataclass
class MinedRecord:
    time: float
    kind: str
    size: int
    n_txs: int
    block: str

    def line(self) -> str:
        return f"{self.time:.9f} {self.kind} {self.size} {self.n_txs} {self.block}"


@dataclass
class Reversal:
    node: int
    level: int
    confirmed: Hash
    replaced_by: Hash
    time: float


def plurality(counts: Dict[Hash, Tuple[int, int]]) -> Optional[Hash]:
    if not counts:
        return None
    return min(counts, key=lambda h: (-counts[h][0], h))


class Node:
    def __init__(
        self,
        node_id: int,
        params: SortitionParams,
        conf: ConfirmationParams,
        rate: float,
        rng: np.random.Generator,
        keys: Optional[KeyDirectory] = None,
        tx_block_capacity: int = 200,
        source=None,
        executor: Optional[Executor] = None,
        workers: int = 1,
        pool: Optional[ThreadPoolExecutor] = None,
        mempool_capacity: int = 500_000,
    ):
        self.id = node_id
        self.rate = rate
        self.rng = rng
        self.keys = keys
        self.conf = conf
        self.state = BlocktreeState(params, keys)
        self.ledger = ConfirmedLedger.new(self.state)
        self.mempool = Mempool(mempool_capacity)
        self.miner = MinerConfig(rate, params, tx_block_capacity)
        self.source = source
        self.executor = executor
        self.workers = workers
        self.pool = pool
        self.mined: List[MinedRecord] = []
        self.receipts: List[TimedReceipt] = []
        self.confirmed: List[Tuple[float, LedgerEntry]] = []
        self.confirm_time: Dict[int, float] = {}
        self.reversals: List[Reversal] = []
        self._reversed_levels: set = set()
        self._dirty = False

    def mine(self, now: float) -> Block:
        if self.source is not None:
            self.source.generate_until(now, self.mempool)
        block = mine_block(self.miner, self.state, self.mempool, self.rng, self.id, now)
        self._insert(block, now)
        n_txs = len(block.content.txs) if isinstance(block.content, TransactionPayload) else 0
        self.mined.append(MinedRecord(now, block.kind.value, block.size, n_txs, block.hash.hex()))
        return block

    def receive(self, block: Block, now: float) -> bool:
        if self.state.knows(block.hash):
            return False
        self._insert(block, now)
        return True

    def _insert(self, block: Block, now: float) -> None:
        sig_ok = None
        if self.keys is not None and isinstance(block.content, TransactionPayload):
            sig_ok = all(verify_batch(block.content.txs, self.keys, self.workers, self.pool))
        out = self.state.insert_block(block, now, sig_ok)
        if out.status is InsertStatus.ACCEPTED and not out.duplicate:
            mempool_update(self.mempool, block)
            for h in out.newly_unbuffered:
                mempool_update(self.mempool, self.state.blocks[h])
            self._dirty = True

    def tick(self, now: float) -> List[Hash]:
        if not self._dirty:
            return []
        self._dirty = False
        leaders, entries, _ = ledger_tick(
            self.state, self.ledger, self.conf,
            executor=lambda es: self._execute(es, now),
        )
        for h in leaders:
            self.confirm_time[self.state.proposer_level[h]] = now
        self._check_reversals(now)
        return leaders

    def _execute(self, entries: List[LedgerEntry], now: float) -> None:
        self.confirmed.extend((now, e) for e in entries)
        if self.executor is None:
            return
        # one executor block per confirmed leader level
        start = 0
        for i in range(1, len(entries) + 1):
            if i == len(entries) or entries[i].level != entries[start].level:
                batch = entries[start:i]
                self.receipts.extend(
                    self.executor.run_block(batch[0].level, [e.tx for e in batch], now)
                )
                start = i

    def _check_reversals(self, now: float) -> None:
        touched = self.state.touched_levels
        if not touched:
            return
        confirmed = self.ledger.confirmed_level
        for level in sorted(touched):
            if level > confirmed or level in self._reversed_levels:
                continue
            leader = self.ledger.leaders[level - 1]
            winner = plurality(self.state.count_votes(level))
            if winner is not None and winner != leader:
                self._reversed_levels.add(level)
                self.reversals.append(Reversal(self.id, level, leader, winner, now))
        touched.clear()

    def mined_bytes(self) -> Dict[str, int]:
        out = {k.value: 0 for k in BlockType}
        for r in self.mined:
            out[r.kind] += r.size
        return out

"""Leader confirmation and transaction ordering.

The confirmation rule is a quorum of deep votes: the lowest unconfirmed level
is settled once some proposer holds at least ``quorum`` votes and each of those
votes sits at least ``k_conf`` blocks below its voter-chain tip.  When every
voter chain has voted at a level and all votes are ``k_conf`` deep, the
plurality winner is confirmed even without a quorum, so a level whose votes
split evenly cannot stall the ledger forever.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple, TypeVar

from .blocktree import BlocktreeState
from .types import Hash, ProposerPayload, Transaction, TransactionPayload


@dataclass
class ConfirmationParams:
    quorum: int
    k_conf: int = 8
    tick_interval: float = 0.1
    plurality_fallback: bool = True

    @classmethod
    def for_chains(cls, m: int, **kw) -> "ConfirmationParams":
        return cls(quorum=m // 2 + 1, **kw)

    def validate(self, m: int) -> None:
        if not 1 <= self.quorum <= m:
            raise ValueError(f"quorum must be in [1, {m}], got {self.quorum}")
        if self.k_conf < 1:
            raise ValueError("k_conf must be >= 1")
        if self.tick_interval <= 0:
            raise ValueError("tick_interval must be > 0")


@dataclass(frozen=True)
class LedgerEntry:
    position: int
    tx: Transaction
    source: Hash
    level: int

    def line(self) -> str:
        return f"{self.position} {self.tx.hash.hex()} {self.source.hex()} {self.level}"


@dataclass
class ConfirmedLedger:
    leaders: List[Hash] = field(default_factory=list)
    included_proposers: Set[Hash] = field(default_factory=set)
    included_tx_blocks: List[Hash] = field(default_factory=list)
    seen_tx_blocks: Set[Hash] = field(default_factory=set)
    seen_tx_hashes: Set[Hash] = field(default_factory=set)
    log: List[LedgerEntry] = field(default_factory=list)
    executed_upto: int = 0

    @classmethod
    def new(cls, state: BlocktreeState) -> "ConfirmedLedger":
        return cls(included_proposers={state.proposer_genesis})

    @property
    def confirmed_level(self) -> int:
        return len(self.leaders)

    def lines(self) -> List[str]:
        return [e.line() for e in self.log]


def _pick(cands: Dict[Hash, int]) -> Hash:
    return min(cands, key=lambda h: (-cands[h], h))


def decide_leader(
    state: BlocktreeState, level: int, params: ConfirmationParams
) -> Optional[Hash]:
    """Leader for ``level`` if the confirmation rule is met right now."""
    depths = state.vote_depths(level)
    if not depths:
        return None
    qualified = {
        p: len(ds) for p, ds in depths.items()
        if len(ds) >= params.quorum and min(ds) >= params.k_conf
    }
    if qualified:
        return _pick(qualified)
    if params.plurality_fallback:
        all_votes = [d for ds in depths.values() for d in ds]
        if len(all_votes) == state.params.m and min(all_votes) >= params.k_conf:
            return _pick({p: len(ds) for p, ds in depths.items()})
    return None


def try_confirm(
    state: BlocktreeState, ledger: ConfirmedLedger, params: ConfirmationParams
) -> List[Hash]:
    new: List[Hash] = []
    while True:
        level = ledger.confirmed_level + 1
        if level > state.height:
            break
        leader = decide_leader(state, level, params)
        if leader is None:
            break
        ledger.leaders.append(leader)
        new.append(leader)
    return new


def _expand(state: BlocktreeState, ledger: ConfirmedLedger, root: Hash) -> List[Hash]:
    """Post-order walk of proposer references: the tx_refs of everything ``root``
    pulls in, in reference order, then root's own tx_refs."""
    order: List[Hash] = []
    ledger.included_proposers.add(root)
    stack: List[Tuple[Hash, int]] = [(root, 0)]
    while stack:
        p, i = stack[-1]
        blk = state.blocks.get(p)
        if blk is None or not isinstance(blk.content, ProposerPayload):
            raise RuntimeError(f"confirmed proposer {p.hex()} missing from blocktree")
        refs = blk.content.proposer_refs
        if i < len(refs):
            stack[-1] = (p, i + 1)
            r = refs[i]
            if r not in ledger.included_proposers:
                ledger.included_proposers.add(r)
                stack.append((r, 0))
        else:
            stack.pop()
            order.extend(blk.content.tx_refs)
    return order


def order_transactions(
    state: BlocktreeState, ledger: ConfirmedLedger, new_leaders: List[Hash]
) -> List[LedgerEntry]:
    out: List[LedgerEntry] = []
    for leader in new_leaders:
        level = state.proposer_level[leader]
        for tb in _expand(state, ledger, leader):
            if tb in ledger.seen_tx_blocks:
                continue
            blk = state.tx_blocks.get(tb)
            if blk is None:
                raise RuntimeError(f"referenced tx block {tb.hex()} missing from blocktree")
            ledger.seen_tx_blocks.add(tb)
            ledger.included_tx_blocks.append(tb)
            assert isinstance(blk.content, TransactionPayload)
            for tx in blk.content.txs:
                h = tx.hash
                if h in ledger.seen_tx_hashes:
                    continue
                ledger.seen_tx_hashes.add(h)
                entry = LedgerEntry(len(ledger.log), tx, tb, level)
                ledger.log.append(entry)
                out.append(entry)
    return out


R = TypeVar("R")


def ledger_tick(
    state: BlocktreeState,
    ledger: ConfirmedLedger,
    params: ConfirmationParams,
    executor: Optional[Callable[[List[LedgerEntry]], R]] = None,
) -> Tuple[List[Hash], List[LedgerEntry], Optional[R]]:
    """Confirm what can be confirmed and hand the new entries over exactly once."""
    leaders = try_confirm(state, ledger, params)
    if not leaders:
        return [], [], None
    entries = order_transactions(state, ledger, leaders)
    result = executor(entries) if executor is not None else None
    ledger.executed_upto = len(ledger.log)
    return leaders, entries, result

"""A node's view of the proposer tree and the m voter trees.

Blocks whose parent or references are not yet known are parked in an
availability buffer and inserted as soon as the last dependency shows up, so
the final state does not depend on arrival order.  All tie-breaks between
equal-depth tips prefer the numerically smallest hash.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple, Union

from .types import (
    ZERO_HASH,
    Block,
    BlockType,
    Hash,
    KeyDirectory,
    ProposerPayload,
    SortitionParams,
    TransactionPayload,
    VoterPayload,
    proposer_genesis,
    slot_matches,
    verify_tx,
    voter_genesis,
)

PROPOSER_TREE = "proposer"
TreeId = Union[str, int]


class InsertStatus(enum.Enum):
    ACCEPTED = "accepted"
    BUFFERED = "buffered"
    REJECTED_INVALID = "rejected"


@dataclass
class InsertOutcome:
    status: InsertStatus
    newly_unbuffered: List[Hash] = field(default_factory=list)
    duplicate: bool = False
    reason: str = ""


@dataclass
class VoterChain:
    index: int
    genesis: Hash
    depth: Dict[Hash, int] = field(default_factory=dict)
    tip: Hash = ZERO_HASH
    # level -> (proposer voted for, depth of the voting block), longest chain only
    votes: Dict[int, Tuple[Hash, int]] = field(default_factory=dict)

    @property
    def tip_depth(self) -> int:
        return self.depth[self.tip]


def dependencies(block: Block) -> List[Hash]:
    c = block.content
    if isinstance(c, ProposerPayload):
        return [block.parent, *c.tx_refs, *c.proposer_refs]
    if isinstance(c, VoterPayload):
        return [block.parent, *(p for _, p in c.votes)]
    return []


def _better(depth_a: int, hash_a: Hash, depth_b: int, hash_b: Hash) -> bool:
    """True when (depth_a, hash_a) should replace (depth_b, hash_b) as tip."""
    return depth_a > depth_b or (depth_a == depth_b and hash_a < hash_b)


class BlocktreeState:
    def __init__(
        self,
        params: SortitionParams,
        keys: Optional[KeyDirectory] = None,
        check_sortition: bool = True,
    ):
        self.params = params
        self.keys = keys
        self.check_sortition = check_sortition

        self.blocks: Dict[Hash, Block] = {}
        self.arrival_time: Dict[Hash, float] = {}
        self.arrival_log: List[Hash] = []

        g = proposer_genesis()
        self.proposer_genesis = g.hash
        self.proposer_level: Dict[Hash, int] = {g.hash: 0}
        self.proposer_levels: Dict[int, List[Hash]] = {0: [g.hash]}
        self.proposer_tip: Hash = g.hash
        self.blocks[g.hash] = g
        self.arrival_time[g.hash] = 0.0

        self.chains: List[VoterChain] = []
        self.chain_of: Dict[Hash, int] = {}
        for i in range(params.m):
            vg = voter_genesis(i)
            self.blocks[vg.hash] = vg
            self.arrival_time[vg.hash] = 0.0
            self.chains.append(VoterChain(i, vg.hash, {vg.hash: 0}, vg.hash))
            self.chain_of[vg.hash] = i

        self.tx_blocks: Dict[Hash, Block] = {}
        self.unreferenced_tx: Dict[Hash, None] = {}
        self.unreferenced_proposers: Dict[Hash, None] = {g.hash: None}

        self.buffer: Dict[Hash, List[Hash]] = defaultdict(list)
        self.pending: Dict[Hash, Tuple[Block, Set[Hash]]] = {}
        self.rejected: Dict[Hash, str] = {}
        # levels whose counted votes changed since the consumer last cleared it
        self.touched_levels: Set[int] = set()

    # -- queries -----------------------------------------------------------

    @property
    def height(self) -> int:
        return self.proposer_level[self.proposer_tip]

    def __contains__(self, h: Hash) -> bool:
        return h in self.blocks

    def knows(self, h: Hash) -> bool:
        return h in self.blocks or h in self.pending or h in self.rejected

    def longest_chain_tip(self, tree: TreeId) -> Hash:
        if tree == PROPOSER_TREE:
            return self.proposer_tip
        return self.chains[tree].tip

    def tree_depths(self, tree: TreeId) -> Dict[Hash, int]:
        if tree == PROPOSER_TREE:
            return self.proposer_level
        return self.chains[tree].depth

    def unvoted_levels(self, chain_index: int) -> List[int]:
        votes = self.chains[chain_index].votes
        return [lv for lv in range(1, self.height + 1) if lv not in votes]

    def count_votes(self, level: int) -> Dict[Hash, Tuple[int, int]]:
        """proposer -> (valid vote count, shallowest vote depth)."""
        out: Dict[Hash, Tuple[int, int]] = {}
        for chain in self.chains:
            entry = chain.votes.get(level)
            if entry is None:
                continue
            target, d = entry
            vd = chain.tip_depth - d + 1
            if target in out:
                n, lo = out[target]
                out[target] = (n + 1, min(lo, vd))
            else:
                out[target] = (1, vd)
        return out

    def vote_depths(self, level: int) -> Dict[Hash, List[int]]:
        out: Dict[Hash, List[int]] = defaultdict(list)
        for chain in self.chains:
            entry = chain.votes.get(level)
            if entry is not None:
                out[entry[0]].append(chain.tip_depth - entry[1] + 1)
        return dict(out)

    def voters_at(self, level: int) -> int:
        return sum(1 for c in self.chains if level in c.votes)

    def forking_rate(self, tree: TreeId) -> float:
        depths = self.tree_depths(tree)
        total = len(depths) - 1
        if total <= 0:
            return 0.0
        return 1.0 - depths[self.longest_chain_tip(tree)] / total

    def first_received(self, level: int) -> Optional[Hash]:
        cands = self.proposer_levels.get(level)
        if not cands:
            return None
        return min(cands, key=lambda h: (self.arrival_time[h], h))

    def ancestors(self, h: Hash) -> List[Hash]:
        """Path from ``h`` back to (and including) its tree's genesis."""
        out = []
        while h != ZERO_HASH:
            out.append(h)
            h = self.blocks[h].parent
        return out

    # -- insertion ---------------------------------------------------------

    def insert_block(
        self, block: Block, now: float = 0.0, sig_ok: Optional[bool] = None
    ) -> InsertOutcome:
        """Insert a received or self-mined block.

        ``sig_ok`` carries a signature verdict computed ahead of time (for
        instance by a worker pool); when omitted, transaction blocks are
        verified inline against ``self.keys``.
        """
        h = block.hash
        if self.knows(h):
            return InsertOutcome(InsertStatus.ACCEPTED, duplicate=True)

        missing = {d for d in dependencies(block) if d not in self.blocks}
        if missing:
            self.pending[h] = (block, missing)
            for d in missing:
                self.buffer[d].append(h)
            return InsertOutcome(InsertStatus.BUFFERED)

        reason = self._validate(block, sig_ok)
        if reason:
            self.rejected[h] = reason
            return InsertOutcome(InsertStatus.REJECTED_INVALID, reason=reason)
        self._attach(block, now)

        released: List[Hash] = []
        work = [h]
        while work:
            done = work.pop(0)
            for waiter in self.buffer.pop(done, ()):
                blk, miss = self.pending[waiter]
                miss.discard(done)
                if miss:
                    continue
                del self.pending[waiter]
                why = self._validate(blk, None)
                if why:
                    self.rejected[waiter] = why
                    continue
                self._attach(blk, now)
                released.append(waiter)
                work.append(waiter)
        return InsertOutcome(InsertStatus.ACCEPTED, released)

    def _validate(self, block: Block, sig_ok: Optional[bool]) -> str:
        if self.check_sortition and not slot_matches(block, self.params):
            return "sortition mismatch"
        c = block.content
        if isinstance(c, ProposerPayload):
            plevel = self.proposer_level.get(block.parent)
            if plevel is None:
                return "proposer parent is not a proposer block"
            if c.level != plevel + 1:
                return "proposer level does not follow parent"
            if any(r not in self.tx_blocks for r in c.tx_refs):
                return "tx_ref is not a transaction block"
            if any(r not in self.proposer_level for r in c.proposer_refs):
                return "proposer_ref is not a proposer block"
        elif isinstance(c, VoterPayload):
            if not 0 <= c.chain_index < self.params.m:
                return "chain index out of range"
            if self.chain_of.get(block.parent) != c.chain_index:
                return "voter parent is on another chain"
            if any(p not in self.proposer_level for _, p in c.votes):
                return "vote for a non-proposer block"
            if len({lv for lv, _ in c.votes}) != len(c.votes):
                return "duplicate vote levels"
        elif isinstance(c, TransactionPayload):
            if sig_ok is None:
                sig_ok = self.keys is None or all(verify_tx(tx, self.keys) for tx in c.txs)
            if not sig_ok:
                return "bad transaction signature"
        return ""

    def _attach(self, block: Block, now: float) -> None:
        h = block.hash
        self.blocks[h] = block
        self.arrival_time[h] = now
        self.arrival_log.append(h)
        c = block.content
        if isinstance(c, ProposerPayload):
            self.proposer_level[h] = c.level
            self.proposer_levels.setdefault(c.level, []).append(h)
            for r in c.tx_refs:
                self.unreferenced_tx.pop(r, None)
            self.unreferenced_proposers.pop(block.parent, None)
            for r in c.proposer_refs:
                self.unreferenced_proposers.pop(r, None)
            self.unreferenced_proposers[h] = None
            tip = self.proposer_tip
            if _better(c.level, h, self.proposer_level[tip], tip):
                self.proposer_tip = h
        elif isinstance(c, VoterPayload):
            chain = self.chains[c.chain_index]
            depth = chain.depth[block.parent] + 1
            chain.depth[h] = depth
            self.chain_of[h] = c.chain_index
            old = chain.tip
            if _better(depth, h, chain.depth[old], old):
                chain.tip = h
                if block.parent == old:
                    self._record_votes(chain, c, depth)
                else:
                    before = chain.votes
                    self._rebuild_votes(chain)
                    after = chain.votes
                    self.touched_levels.update(
                        lv for lv in before.keys() | after.keys()
                        if before.get(lv, (None,))[0] != after.get(lv, (None,))[0]
                    )
        else:
            self.tx_blocks[h] = block
            self.unreferenced_tx[h] = None

    def _record_votes(self, chain: VoterChain, c: VoterPayload, depth: int) -> None:
        for level, target in c.votes:
            if level in chain.votes:
                continue
            if self.proposer_level.get(target) != level:
                continue
            chain.votes[level] = (target, depth)
            self.touched_levels.add(level)

    def _rebuild_votes(self, chain: VoterChain) -> None:
        chain.votes = {}
        for bh in reversed(self.ancestors(chain.tip)):
            blk = self.blocks[bh]
            self._record_votes(chain, blk.content, chain.depth[bh])

    # -- export --------------------------------------------------------------

    def dump(self) -> str:
        """Line-oriented state dump: ``hash type parent depth`` sorted by hash,
        followed by tip and vote-table lines.  Independent of arrival order."""
        lines = []
        for h in sorted(self.blocks):
            b = self.blocks[h]
            if b.kind is BlockType.PROPOSER:
                depth = self.proposer_level[h]
            elif b.kind is BlockType.VOTER:
                depth = self.chains[b.content.chain_index].depth[h]
            else:
                depth = 0
            lines.append(f"{h.hex()} {b.kind.value} {b.parent.hex()} {depth}")
        lines.append(f"tip proposer {self.proposer_tip.hex()}")
        for chain in self.chains:
            lines.append(f"tip {chain.index} {chain.tip.hex()}")
            for level in sorted(chain.votes):
                target, d = chain.votes[level]
                lines.append(f"vote {chain.index} {level} {target.hex()} {d}")
        lines.append("unreferenced_tx " + " ".join(sorted(h.hex() for h in self.unreferenced_tx)))
        lines.append("unreferenced_proposers "
                     + " ".join(sorted(h.hex() for h in self.unreferenced_proposers)))
        lines.append("pending " + " ".join(sorted(h.hex() for h in self.pending)))
        return "\n".join(lines) + "\n"


def insert_all(state: BlocktreeState, blocks: Iterable[Block], now: float = 0.0) -> None:
    for b in blocks:
        state.insert_block(b, now)

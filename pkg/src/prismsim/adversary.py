"""Attacker strategies run by a single rushing adversary.

The adversary mines at ``beta`` times the total rate, sees every honest block
the moment it is mined and can deliver its own blocks to every honest node
with zero delay.

PrivateVoteWithhold
    Mines a competing proposer ``A`` at the target level and keeps it private.
    On each voter chain it grows a private branch forking just below the
    public block that voted at the target level, voting for ``A``.  Once some
    honest node has confirmed a different leader at that level, every branch
    that is ``release_trigger`` blocks longer than the public chain is
    published, flipping that chain's vote.

ProposerBalance
    Each proposer slot becomes a sibling at the newest of the last few levels
    that still holds a single honest proposer, published at once so two
    proposers compete there; its voter blocks vote for its own proposers.

InvalidTxSpam
    No mining behaviour; the harness injects signed transactions from
    zero-balance accounts into honest mempools (``spam_fraction``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set

import numpy as np

from .blocktree import BlocktreeState
from .ledger import ConfirmationParams
from .miner import draw_slot, grind
from .types import (
    Block,
    BlockType,
    Hash,
    ProposerPayload,
    SortitionParams,
    VoterPayload,
)

BALANCE_LOOKBACK = 3


class Strategy(enum.Enum):
    NONE = "none"
    PRIVATE_VOTE_WITHHOLD = "private_vote_withhold"
    PROPOSER_BALANCE = "proposer_balance"
    INVALID_TX_SPAM = "invalid_tx_spam"


@dataclass
class AttackConfig:
    beta: float = 0.0
    strategy: Strategy = Strategy.NONE
    target_level: Optional[int] = None
    release_trigger: int = 1
    spam_fraction: float = 0.0

    def __post_init__(self):
        if isinstance(self.strategy, str):
            self.strategy = Strategy(self.strategy)

    def validate(self) -> List[str]:
        errs = []
        if not 0.0 <= self.beta < 0.5:
            errs.append("beta must be in [0, 0.5)")
        if self.release_trigger < 1:
            errs.append("release_trigger must be >= 1")
        if not 0.0 <= self.spam_fraction <= 1.0:
            errs.append("spam_fraction must be in [0, 1]")
        if self.target_level is not None and self.target_level < 1:
            errs.append("target_level must be >= 1")
        return errs

    @property
    def mines(self) -> bool:
        return self.beta > 0 and self.strategy in (
            Strategy.PRIVATE_VOTE_WITHHOLD, Strategy.PROPOSER_BALANCE)


@dataclass
class AttackStats:
    mined: int = 0
    withheld: int = 0
    released: int = 0
    chains_released: int = 0
    triggered_at: Optional[float] = None

    def as_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)


def voted_levels(view: BlocktreeState, h: Hash) -> Set[int]:
    """Levels voted by ``h`` and its ancestors."""
    out: Set[int] = set()
    for bh in view.ancestors(h):
        out.update(lv for lv, _ in view.blocks[bh].content.votes)
    return out


def ancestor_at(view: BlocktreeState, h: Hash, depth: int, chain: int) -> Hash:
    depths = view.chains[chain].depth
    while depths[h] > depth:
        h = view.blocks[h].parent
    return h


class Adversary:
    def __init__(
        self,
        node_id: int,
        config: AttackConfig,
        params: SortitionParams,
        conf: ConfirmationParams,
        rate: float,
        rng: np.random.Generator,
    ):
        self.id = node_id
        self.config = config
        self.params = params
        self.conf = conf
        self.rate = rate
        self.rng = rng
        self.view = BlocktreeState(params)
        self.stats = AttackStats()
        self.own: Set[Hash] = set()
        # PrivateVoteWithhold state
        self.secret: Optional[Block] = None
        self.target: Optional[int] = None
        self.branches: Dict[int, List[Block]] = {}
        self.fork_depth: Dict[int, int] = {}
        self.triggered = False

    # -- simulator hooks ----------------------------------------------------

    def observe(self, block: Block, now: float) -> List[Block]:
        self.view.insert_block(block, now)
        if self.config.strategy is Strategy.PRIVATE_VOTE_WITHHOLD and self.triggered:
            return self._releasable(now)
        return []

    def on_mine(self, now: float) -> List[Block]:
        slot = draw_slot(self.params, self.rng)
        s = self.config.strategy
        if s is Strategy.PRIVATE_VOTE_WITHHOLD:
            return self._withhold_mine(slot, now)
        if s is Strategy.PROPOSER_BALANCE:
            return self._balance_mine(slot, now)
        return []

    def on_tick(self, now: float, nodes: Sequence) -> List[Block]:
        if self.config.strategy is not Strategy.PRIVATE_VOTE_WITHHOLD or self.secret is None:
            return []
        if not self.triggered:
            for node in nodes:
                led = node.ledger
                if led.confirmed_level >= self.target and led.leaders[self.target - 1] != self.secret.hash:
                    self.triggered = True
                    self.stats.triggered_at = now
                    break
        if self.triggered:
            return self._releasable(now)
        return []

    # -- helpers --------------------------------------------------------------

    def _make(self, parent: Hash, content, now: float) -> Block:
        block = grind(parent, self.id, now, content, self.params, self.rng)
        self.own.add(block.hash)
        self.stats.mined += 1
        return block

    def _publish(self, blocks: List[Block], now: float) -> List[Block]:
        for b in blocks:
            self.view.insert_block(b, now)
        self.stats.released += len(blocks)
        return blocks

    # -- private vote withholding -------------------------------------------------

    def _withhold_mine(self, slot, now: float) -> List[Block]:
        view = self.view
        if slot.kind is BlockType.PROPOSER:
            if self.secret is None:
                level = self.config.target_level or view.height + 1
                if level - 1 > view.height:
                    return []
                parent = view.first_received(level - 1)
                self.secret = self._make(parent, ProposerPayload(level, (), (parent,)), now)
                self.target = level
                self.stats.withheld += 1
            return []
        if slot.kind is not BlockType.VOTER or self.secret is None:
            return []

        i = slot.chain
        chain = view.chains[i]
        public_vote = chain.votes.get(self.target)
        if public_vote is not None and public_vote[0] == self.secret.hash:
            # this chain already votes for us in public; keep extending it openly
            block = self._voter_block(i, chain.tip, voted_levels(view, chain.tip), now)
            return self._publish([block], now)

        fork = chain.tip if public_vote is None else ancestor_at(view, chain.tip, public_vote[1] - 1, i)
        fork_depth = chain.depth[fork]
        branch = self.branches.get(i)
        if not branch or self.fork_depth[i] + len(branch) <= fork_depth:
            branch = self.branches[i] = []
            self.fork_depth[i] = fork_depth
            parent, voted = fork, voted_levels(view, fork)
        else:
            parent = branch[-1].hash
            voted = voted_levels(view, self._branch_root(i)) | {
                lv for b in branch for lv, _ in b.content.votes}
        block = self._voter_block(i, parent, voted, now)
        branch.append(block)
        self.stats.withheld += 1
        if self.triggered:
            return self._releasable(now)
        return []

    def _branch_root(self, i: int) -> Hash:
        return self.branches[i][0].parent

    def _voter_block(self, i: int, parent: Hash, voted: Set[int], now: float) -> Block:
        view = self.view
        top = max(view.height, self.target or 0)
        votes = []
        for lv in range(1, top + 1):
            if lv in voted:
                continue
            target = self.secret.hash if lv == self.target else view.first_received(lv)
            if target is not None:
                votes.append((lv, target))
        return self._make(parent, VoterPayload(i, tuple(votes)), now)

    def _releasable(self, now: float) -> List[Block]:
        out: List[Block] = []
        for i, branch in list(self.branches.items()):
            if not branch:
                continue
            lead = self.fork_depth[i] + len(branch) - self.view.chains[i].tip_depth
            if lead >= self.config.release_trigger:
                if self.secret.hash not in self.view:
                    out.append(self.secret)
                out.extend(branch)
                self.branches[i] = []
                self.stats.chains_released += 1
        if out:
            self.stats.withheld -= len(out)
            return self._publish(out, now)
        return []

    # -- proposer balancing -----------------------------------------------------

    def _balance_mine(self, slot, now: float) -> List[Block]:
        view = self.view
        if slot.kind is BlockType.PROPOSER:
            # contest the newest level that still has a lone honest proposer
            level = next(
                (lv for lv in range(view.height, max(0, view.height - BALANCE_LOOKBACK), -1)
                 if len(view.proposer_levels.get(lv, ())) == 1
                 and view.proposer_levels[lv][0] not in self.own),
                None)
            if level is not None:
                parent = view.first_received(level - 1)
            else:
                parent, level = view.proposer_tip, view.height + 1
            content = ProposerPayload(level, tuple(view.unreferenced_tx), (parent,))
            return self._publish([self._make(parent, content, now)], now)
        if slot.kind is BlockType.VOTER:
            i = slot.chain
            votes = []
            for lv in view.unvoted_levels(i):
                mine = [h for h in view.proposer_levels.get(lv, []) if h in self.own]
                target = min(mine) if mine else view.first_received(lv)
                if target is not None:
                    votes.append((lv, target))
            block = self._make(view.chains[i].tip, VoterPayload(i, tuple(votes)), now)
            return self._publish([block], now)
        return []

"""Synthetic transaction workloads.

Senders follow a Zipf law over the account population; receivers of payments
and token transfers are uniform.  Every generated transaction is signed with
the sender's key and stamped with its generation time so latency can be
measured at confirmation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .types import (
    AccountId,
    CpuHeavy,
    DoNothing,
    Hash,
    IoHeavy,
    KeyDirectory,
    KeyPair,
    NativePayment,
    TokenTransfer,
    Transaction,
    keypair_from_seed,
    sign_tx,
)
from .vm import DEFAULT_GAS, GasSchedule, WorldState, gas_for, mint_tokens

APPS = ("payment", "donothing", "cpuheavy", "ioheavy", "token")

CONTRACT_ACCOUNT = keypair_from_seed(b"contract/donothing").account
TOKEN_ACCOUNT = keypair_from_seed(b"contract/token").account


@dataclass
class Population:
    keys: List[KeyPair]
    directory: KeyDirectory
    spam_keys: List[KeyPair] = field(default_factory=list)

    @property
    def accounts(self) -> List[AccountId]:
        return [k.account for k in self.keys]


def make_population(n_accounts: int, seed: int, n_spam: int = 0) -> Population:
    directory = KeyDirectory()
    keys = [keypair_from_seed(f"{seed}/account/{i}".encode()) for i in range(n_accounts)]
    spam = [keypair_from_seed(f"{seed}/spam/{i}".encode()) for i in range(n_spam)]
    for kp in keys + spam:
        directory.register(kp)
    return Population(keys, directory, spam)


def genesis_state(pop: Population, balance: int = 10**15, tokens: int = 0) -> WorldState:
    """Fund every regular account; spam accounts start empty."""
    state = WorldState()
    for kp in pop.keys:
        state.mint(kp.account, balance)
    state.touch(CONTRACT_ACCOUNT)
    state.touch(TOKEN_ACCOUNT)
    if tokens:
        for kp in pop.keys:
            mint_tokens(state, TOKEN_ACCOUNT, kp.account, tokens)
    return state


def zipf_cdf(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    c = np.cumsum(w)
    return c / c[-1]


class WorkloadSampler:
    """Draws signed transactions from a fixed sender pool.

    ``senders`` is the pool this sampler owns (rank order = popularity order);
    keeping pools disjoint across nodes keeps each sender's nonces in one
    mempool.
    """

    def __init__(
        self,
        senders: Sequence[KeyPair],
        receivers: Sequence[AccountId],
        app: str = "payment",
        zipf_exponent: float = 1.1,
        spam_keys: Sequence[KeyPair] = (),
        spam_fraction: float = 0.0,
        schedule: GasSchedule = DEFAULT_GAS,
        max_amount: int = 1000,
    ):
        if app not in APPS:
            raise ValueError(f"unknown workload {app!r}; expected one of {APPS}")
        if not senders:
            raise ValueError("sampler needs at least one sender")
        self.senders = list(senders)
        self.receivers = list(receivers)
        self.app = app
        self.cdf = zipf_cdf(len(self.senders), zipf_exponent)
        self.spam_keys = list(spam_keys)
        self.spam_fraction = spam_fraction if self.spam_keys else 0.0
        self.schedule = schedule
        self.max_amount = max_amount
        self.nonces: Dict[AccountId, int] = {}

    def sender_index(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self.cdf, rng.random(), side="right"))

    def _app(self, rng: np.random.Generator):
        if self.app == "payment":
            to = self.receivers[int(rng.integers(len(self.receivers)))]
            return NativePayment(to, int(rng.integers(1, self.max_amount + 1)))
        if self.app == "donothing":
            return DoNothing()
        if self.app == "cpuheavy":
            return CpuHeavy()
        if self.app == "ioheavy":
            return IoHeavy()
        to = self.receivers[int(rng.integers(len(self.receivers)))]
        return TokenTransfer(TOKEN_ACCOUNT, to, int(rng.integers(1, self.max_amount + 1)))

    def generate_tx(self, rng: np.random.Generator) -> Transaction:
        if self.spam_fraction and rng.random() < self.spam_fraction:
            kp = self.spam_keys[int(rng.integers(len(self.spam_keys)))]
        else:
            kp = self.senders[min(self.sender_index(rng), len(self.senders) - 1)]
        app = self._app(rng)
        nonce = self.nonces.get(kp.account, 0)
        self.nonces[kp.account] = nonce + 1
        tx = Transaction(kp.account, nonce, app, gas_for(app, self.schedule))
        return sign_tx(tx, kp.secret)


def generate_tx(sampler: WorkloadSampler, rng: np.random.Generator) -> Transaction:
    return sampler.generate_tx(rng)


class TxSource:
    """Evenly spaced generation at ``rate`` tx/s, materialised lazily."""

    def __init__(self, sampler: WorkloadSampler, rate: float, rng: np.random.Generator,
                 gen_times: Dict[Hash, float], phase: float = 0.0, start: float = 0.0):
        self.sampler = sampler
        self.rate = rate
        self.rng = rng
        self.gen_times = gen_times
        self.phase = phase
        self.start = start
        self.count = 0

    def next_time(self) -> float:
        return self.start + (self.count + self.phase) / self.rate

    def generate_until(self, now: float, mempool) -> int:
        if self.rate <= 0:
            return 0
        made = 0
        while self.next_time() <= now:
            t = self.next_time()
            tx = self.sampler.generate_tx(self.rng)
            self.gen_times[tx.hash] = t
            mempool.add(tx)
            self.count += 1
            made += 1
        return made

"""Account-based executor with gas metering.

Execution never raises on bad transactions; every failure becomes a receipt
outcome.  Checks run in this order:

1. sender cannot cover the gas fee      -> SPAM, nothing changes
2. nonce differs from the account nonce -> SANITIZED(bad_nonce), fee charged
3. application check fails              -> SANITIZED(app_failure), fee charged, nonce bumped
4. otherwise                            -> SUCCESS, effects applied, fee charged, nonce bumped

Fees are burned, so ``sum(balances) + fees_burned`` is invariant.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .types import (
    HASH_LEN,
    AccountId,
    CpuHeavy,
    DoNothing,
    Hash,
    IoHeavy,
    NativePayment,
    TokenTransfer,
    Transaction,
    sha256,
)

WORD = 32


@dataclass(frozen=True)
class GasSchedule:
    base: int = 21000
    compare_cost: int = 1
    read_cost: int = 50
    write_cost: int = 200
    price: int = 1


DEFAULT_GAS = GasSchedule()


def worst_case_comparisons(n: int) -> int:
    return n * (n - 1) // 2


def gas_for(app, schedule: GasSchedule = DEFAULT_GAS) -> int:
    g = schedule.base
    if isinstance(app, (DoNothing, NativePayment)):
        return g
    if isinstance(app, TokenTransfer):
        return g + 2 * schedule.write_cost + 2 * schedule.read_cost
    if isinstance(app, CpuHeavy):
        return g + worst_case_comparisons(app.length) * schedule.compare_cost
    if isinstance(app, IoHeavy):
        return g + app.count * schedule.write_cost + 2 * app.count * schedule.read_cost
    raise TypeError(f"unknown application call {app!r}")


class Outcome(enum.Enum):
    SUCCESS = "success"
    SANITIZED = "sanitized"
    SPAM = "spam"


@dataclass(frozen=True)
class ExecutionReceipt:
    tx_hash: Hash
    outcome: Outcome
    gas_used: int
    state_delta_digest: Hash
    reason: str = ""

    def line(self) -> str:
        reason = f":{self.reason}" if self.reason else ""
        return f"{self.tx_hash.hex()} {self.outcome.value}{reason} {self.gas_used}"


@dataclass
class Account:
    balance: int = 0
    nonce: int = 0
    storage: Dict[bytes, bytes] = field(default_factory=dict)


@dataclass
class Counters:
    reads: int = 0
    writes: int = 0
    comparisons: int = 0


class WorldState:
    def __init__(self):
        self.accounts: Dict[AccountId, Account] = {}
        self.fees_burned = 0
        self.total_supply = 0
        self.counters = Counters()
        self._leaves: Dict[AccountId, Hash] = {}
        # concatenated leaves in account-id order, patched in place for touched accounts
        self._order: Optional[List[AccountId]] = None
        self._pos: Dict[AccountId, int] = {}
        self._buf = bytearray()
        self._stale: set = set()
        # balance total as of the last conservation check
        self._bal_seen: Dict[AccountId, int] = {}
        self._bal_total = 0
        self._bal_dirty: set = set()

    def account(self, aid: AccountId) -> Account:
        acct = self.accounts.get(aid)
        if acct is None:
            acct = self.accounts[aid] = Account()
            self._order = None
        return acct

    def touch(self, aid: AccountId) -> Account:
        self._leaves.pop(aid, None)
        self._stale.add(aid)
        self._bal_dirty.add(aid)
        return self.account(aid)

    def mint(self, aid: AccountId, amount: int) -> None:
        self.touch(aid).balance += amount
        self.total_supply += amount

    def balance(self, aid: AccountId) -> int:
        acct = self.accounts.get(aid)
        return acct.balance if acct else 0

    def sload(self, aid: AccountId, key: bytes) -> bytes:
        self.counters.reads += 1
        acct = self.accounts.get(aid)
        if acct is None:
            return bytes(WORD)
        return acct.storage.get(key, bytes(WORD))

    def sstore(self, aid: AccountId, key: bytes, value: bytes) -> None:
        self.counters.writes += 1
        self.touch(aid).storage[key] = value

    def leaf(self, aid: AccountId) -> Hash:
        h = self._leaves.get(aid)
        if h is None:
            acct = self.accounts[aid]
            parts = [aid, acct.balance.to_bytes(16, "big"), struct.pack(">QI", acct.nonce, len(acct.storage))]
            for k in sorted(acct.storage):
                parts.append(k)
                parts.append(acct.storage[k])
            h = self._leaves[aid] = sha256(*parts)
        return h

    def conserved(self) -> bool:
        for aid in self._bal_dirty:
            bal = self.accounts[aid].balance
            self._bal_total += bal - self._bal_seen.get(aid, 0)
            self._bal_seen[aid] = bal
        self._bal_dirty.clear()
        return self._bal_total + self.fees_burned == self.total_supply

    def commitment(self) -> Hash:
        if self._order is None:
            self._order = sorted(self.accounts)
            self._pos = {aid: i for i, aid in enumerate(self._order)}
            self._buf = bytearray(b"".join(self.leaf(aid) for aid in self._order))
        else:
            for aid in self._stale:
                i = self._pos[aid] * HASH_LEN
                self._buf[i:i + HASH_LEN] = self.leaf(aid)
        self._stale.clear()
        return sha256(b"prismsim-state", bytes(self._buf))

    def snapshot(self) -> Tuple:
        return (
            self.fees_burned,
            tuple(sorted(
                (aid, a.balance, a.nonce, tuple(sorted(a.storage.items())))
                for aid, a in self.accounts.items()
            )),
        )


def state_commitment(state: WorldState) -> Hash:
    """Hash over per-account digests taken in account-id order."""
    return state.commitment()


def run_cpu_heavy(length: int = 255, counters: Optional[Counters] = None) -> Tuple[Hash, int]:
    """Quicksort, first element as pivot, on the descending array length..1.

    Returns the digest of the sorted output and the exact comparison count.
    """
    arr = list(range(length, 0, -1))
    comparisons = 0
    out: List[int] = []
    # explicit stack of pending segments; a bare int marks an emitted pivot
    stack: List = [arr]
    while stack:
        item = stack.pop()
        if isinstance(item, int):
            out.append(item)
            continue
        if len(item) <= 1:
            out.extend(item)
            continue
        pivot, rest = item[0], item[1:]
        lo, hi = [], []
        for x in rest:
            comparisons += 1
            (lo if x < pivot else hi).append(x)
        stack.append(hi)
        stack.append(pivot)
        stack.append(lo)
    if counters is not None:
        counters.comparisons += comparisons
    digest = sha256(b"".join(v.to_bytes(2, "big") for v in out))
    return digest, comparisons


def io_key(sender: AccountId, i: int) -> bytes:
    return sha256(sender, i.to_bytes(2, "big"))


def io_value(sender: AccountId, i: int, salt: bytes) -> bytes:
    return sha256(b"io-value", sender, i.to_bytes(2, "big"), salt)


def run_io_heavy(state: WorldState, sender: AccountId, count: int = 255, salt: bytes = b"") -> Tuple[int, int]:
    """Write ``count`` slots, then read them forward and backward. Returns (writes, reads)."""
    w0, r0 = state.counters.writes, state.counters.reads
    for i in range(count):
        state.sstore(sender, io_key(sender, i), io_value(sender, i, salt))
    for order in (range(count), range(count - 1, -1, -1)):
        for i in order:
            if state.sload(sender, io_key(sender, i)) != io_value(sender, i, salt):
                raise AssertionError(f"io-heavy read-back mismatch at slot {i}")
    return state.counters.writes - w0, state.counters.reads - r0


def token_key(holder: AccountId) -> bytes:
    return sha256(b"token-balance", holder)


def _word(n: int) -> bytes:
    return n.to_bytes(WORD, "big")


def mint_tokens(state: WorldState, token_owner: AccountId, holder: AccountId, amount: int) -> None:
    acct = state.touch(token_owner)
    key = token_key(holder)
    cur = int.from_bytes(acct.storage.get(key, bytes(WORD)), "big")
    acct.storage[key] = _word(cur + amount)


def _apply_app(state: WorldState, tx: Transaction) -> bool:
    """Run the application. Returns False (with state untouched) on app failure."""
    app = tx.app
    sender = state.accounts[tx.sender]
    if isinstance(app, NativePayment):
        if sender.balance < app.amount:
            return False
        sender.balance -= app.amount
        state.touch(app.to).balance += app.amount
        return True
    if isinstance(app, DoNothing):
        return True
    if isinstance(app, TokenTransfer):
        if app.token_owner not in state.accounts:
            return False
        src_key, dst_key = token_key(tx.sender), token_key(app.to)
        src = int.from_bytes(state.sload(app.token_owner, src_key), "big")
        dst = int.from_bytes(state.sload(app.token_owner, dst_key), "big")
        if src < app.amount:
            return False
        if tx.sender == app.to:
            state.sstore(app.token_owner, src_key, _word(src))
            state.sstore(app.token_owner, dst_key, _word(src))
            return True
        state.sstore(app.token_owner, src_key, _word(src - app.amount))
        state.sstore(app.token_owner, dst_key, _word(dst + app.amount))
        return True
    if isinstance(app, CpuHeavy):
        run_cpu_heavy(app.length, state.counters)
        return True
    if isinstance(app, IoHeavy):
        run_io_heavy(state, tx.sender, app.count, salt=tx.nonce.to_bytes(8, "big"))
        return True
    return False


def _touched(tx: Transaction) -> List[AccountId]:
    out = [tx.sender]
    app = tx.app
    if isinstance(app, NativePayment):
        out.append(app.to)
    elif isinstance(app, TokenTransfer):
        out.append(app.token_owner)
    return out


def _digest(state: WorldState, tx: Transaction, outcome: Outcome, gas: int) -> Hash:
    parts = [tx.hash, outcome.value.encode(), gas.to_bytes(8, "big")]
    for aid in sorted(set(_touched(tx))):
        acct = state.accounts.get(aid)
        if acct is not None:
            parts += [aid, acct.balance.to_bytes(16, "big"), acct.nonce.to_bytes(8, "big")]
    return sha256(*parts)


def execute_tx(state: WorldState, tx: Transaction, schedule: GasSchedule = DEFAULT_GAS) -> ExecutionReceipt:
    gas = min(gas_for(tx.app, schedule), tx.gas_limit)
    fee = gas * schedule.price
    if state.balance(tx.sender) < fee:
        return ExecutionReceipt(tx.hash, Outcome.SPAM, 0, sha256(tx.hash, b"spam"), "insufficient_gas_fee")

    sender = state.touch(tx.sender)
    if tx.nonce != sender.nonce:
        sender.balance -= fee
        state.fees_burned += fee
        return ExecutionReceipt(tx.hash, Outcome.SANITIZED, gas, _digest(state, tx, Outcome.SANITIZED, gas), "bad_nonce")

    sender.balance -= fee
    state.fees_burned += fee
    if gas < gas_for(tx.app, schedule):
        ok, reason = False, "out_of_gas"
    else:
        ok, reason = _apply_app(state, tx), "app_failure"
    sender.nonce += 1
    if not ok:
        return ExecutionReceipt(tx.hash, Outcome.SANITIZED, gas, _digest(state, tx, Outcome.SANITIZED, gas), reason)
    return ExecutionReceipt(tx.hash, Outcome.SUCCESS, gas, _digest(state, tx, Outcome.SUCCESS, gas))


def apply_block(
    state: WorldState, txs: Iterable[Transaction], schedule: GasSchedule = DEFAULT_GAS
) -> Tuple[List[ExecutionReceipt], Hash]:
    receipts = [execute_tx(state, tx, schedule) for tx in txs]
    return receipts, state_commitment(state)


@dataclass
class TimedReceipt:
    receipt: ExecutionReceipt
    finished: float
    tx: Transaction


class Executor:
    """Single-strand executor with a simulated processing speed.

    With ``gas_per_second`` set, each transaction occupies the executor for
    ``gas_used / gas_per_second`` simulated seconds and batches queue behind
    each other; state is updated eagerly but completion times follow the queue.
    Spam receipts cost a flat base-gas slot, as the check still has to run.
    """

    def __init__(self, state: WorldState, schedule: GasSchedule = DEFAULT_GAS,
                 gas_per_second: Optional[float] = None, check_conservation: bool = False):
        self.state = state
        self.schedule = schedule
        self.gas_per_second = gas_per_second
        self.busy_until = 0.0
        self.check_conservation = check_conservation
        self.conservation_violations = 0
        self.commitments: List[Tuple[int, Hash]] = []
        self.executed: set = set()
        self.duplicate_executions = 0
        self.sanitization_violations = 0

    def cost(self, receipt: ExecutionReceipt) -> float:
        if not self.gas_per_second:
            return 0.0
        return max(receipt.gas_used, self.schedule.base) / self.gas_per_second

    def run_block(self, tag: int, txs: Sequence[Transaction], now: float) -> List[TimedReceipt]:
        t = max(now, self.busy_until)
        out = []
        for tx in txs:
            if tx.hash in self.executed:
                self.duplicate_executions += 1
            self.executed.add(tx.hash)
            before = self._balances(tx)
            r = execute_tx(self.state, tx, self.schedule)
            self._audit(tx, r, before)
            t += self.cost(r)
            out.append(TimedReceipt(r, t, tx))
        self.busy_until = t
        self.commitments.append((tag, state_commitment(self.state)))
        if self.check_conservation and not self.state.conserved():
            self.conservation_violations += 1
        return out

    def _balances(self, tx: Transaction) -> Dict[AccountId, int]:
        return {a: self.state.balance(a) for a in _touched(tx)}

    def _audit(self, tx: Transaction, r: ExecutionReceipt, before: Dict[AccountId, int]) -> None:
        if r.outcome is Outcome.SUCCESS:
            return
        after = {a: self.state.balance(a) for a in before}
        expected = dict(before)
        if r.outcome is Outcome.SANITIZED:
            expected[tx.sender] -= r.gas_used * self.schedule.price
        if after != expected:
            self.sanitization_violations += 1

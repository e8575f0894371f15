"""Block and transaction structures, sortition, signatures and the canonical codec.

Wire layout (all integers big-endian, fixed width):

    header   = parent[32] miner_id:u32 timestamp:f64 nonce:u64 content_root[32]
    content  = tag:u8 payload
      proposer (tag 0) = level:u64 n:u32 tx_ref[32]*n n:u32 proposer_ref[32]*n
      voter    (tag 1) = chain_index:u32 n:u32 (level:u64 proposer[32])*n
      tx       (tag 2) = n:u32 (len:u32 tx_bytes)*n
    tx       = sender[32] nonce:u64 app gas_limit:u64 sig_len:u16 signature
    app      = tag:u8 fields
      NativePayment (0) = to[32] amount:u64
      DoNothing     (1) =
      CpuHeavy      (2) = length:u16
      IoHeavy       (3) = count:u16
      TokenTransfer (4) = token_owner[32] to[32] amount:u64

The block hash is SHA-256 over the header bytes; ``content_root`` is SHA-256
over the content bytes, so the header hash commits to the whole block.
The transaction hash covers everything except the signature.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

Hash = bytes
AccountId = bytes

HASH_LEN = 32
ZERO_HASH: Hash = bytes(HASH_LEN)
HASH_SPACE = 1 << 256


def sha256(*parts: bytes) -> Hash:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


class DecodeError(ValueError):
    """Raised when a byte string is not a valid canonical encoding."""


# ---------------------------------------------------------------------------
# Applications


@dataclass(frozen=True)
class NativePayment:
    to: AccountId
    amount: int


@dataclass(frozen=True)
class DoNothing:
    pass


@dataclass(frozen=True)
class CpuHeavy:
    length: int = 255


@dataclass(frozen=True)
class IoHeavy:
    count: int = 255


@dataclass(frozen=True)
class TokenTransfer:
    token_owner: AccountId
    to: AccountId
    amount: int


ApplicationCall = Union[NativePayment, DoNothing, CpuHeavy, IoHeavy, TokenTransfer]


# ---------------------------------------------------------------------------
# Transactions


@dataclass(frozen=True)
class Transaction:
    sender: AccountId
    nonce: int
    app: ApplicationCall
    gas_limit: int
    signature: bytes = b""

    @cached_property
    def body(self) -> bytes:
        return _encode_tx_body(self)

    @cached_property
    def hash(self) -> Hash:
        return sha256(self.body)

    @cached_property
    def encoded(self) -> bytes:
        return self.body + struct.pack(">H", len(self.signature)) + self.signature

    def with_signature(self, signature: bytes) -> "Transaction":
        return Transaction(self.sender, self.nonce, self.app, self.gas_limit, signature)


# ---------------------------------------------------------------------------
# Blocks


class BlockType(enum.Enum):
    PROPOSER = "proposer"
    VOTER = "voter"
    TRANSACTION = "transaction"


@dataclass(frozen=True)
class ProposerPayload:
    level: int
    tx_refs: Tuple[Hash, ...] = ()
    proposer_refs: Tuple[Hash, ...] = ()

    kind = BlockType.PROPOSER


@dataclass(frozen=True)
class VoterPayload:
    chain_index: int
    votes: Tuple[Tuple[int, Hash], ...] = ()

    kind = BlockType.VOTER


@dataclass(frozen=True)
class TransactionPayload:
    txs: Tuple[Transaction, ...] = ()

    kind = BlockType.TRANSACTION


BlockContent = Union[ProposerPayload, VoterPayload, TransactionPayload]


@dataclass(frozen=True)
class BlockHeader:
    parent: Hash
    miner_id: int
    timestamp: float
    nonce: int
    content_root: Hash

    @cached_property
    def encoded(self) -> bytes:
        return (
            self.parent
            + struct.pack(">IdQ", self.miner_id, self.timestamp, self.nonce)
            + self.content_root
        )


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    content: BlockContent

    @cached_property
    def hash(self) -> Hash:
        return sha256(self.header.encoded)

    @property
    def kind(self) -> BlockType:
        return self.content.kind

    @property
    def parent(self) -> Hash:
        return self.header.parent

    @cached_property
    def size(self) -> int:
        """Serialized length in bytes."""
        return len(self.header.encoded) + len(encode_content(self.content))

    def __repr__(self) -> str:
        return f"Block({self.kind.value}, {self.hash.hex()[:12]})"


def make_block(
    parent: Hash, miner_id: int, timestamp: float, nonce: int, content: BlockContent
) -> Block:
    root = sha256(encode_content(content))
    return Block(BlockHeader(parent, miner_id, float(timestamp), nonce, root), content)


def hash_block(block: Block) -> Hash:
    return block.hash


def proposer_genesis() -> Block:
    return make_block(ZERO_HASH, 0, 0.0, 0, ProposerPayload(level=0))


def voter_genesis(chain_index: int) -> Block:
    return make_block(ZERO_HASH, 0, 0.0, 0, VoterPayload(chain_index=chain_index))


# ---------------------------------------------------------------------------
# Sortition


@dataclass(frozen=True)
class SortitionParams:
    rate_proposer: float
    rate_voter_total: float
    rate_tx: float
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if min(self.rate_proposer, self.rate_voter_total, self.rate_tx) <= 0:
            raise ValueError("all mining rates must be > 0")

    @property
    def total_rate(self) -> float:
        return self.rate_proposer + self.rate_voter_total + self.rate_tx

    @property
    def rate_voter_chain(self) -> float:
        return self.rate_voter_total / self.m


class Slot(NamedTuple):
    kind: BlockType
    chain: Optional[int] = None


@lru_cache(maxsize=64)
def sortition_boundaries(params: SortitionParams) -> Tuple[int, ...]:
    """Exclusive upper bounds of each range, in order proposer, tx, voter 0..m-1."""
    # rates are read as the decimals they print as, so 0.08 means 8/100 exactly
    dec = lambda r: Fraction(repr(float(r)))
    weights = [dec(params.rate_proposer), dec(params.rate_tx)]
    weights += [dec(params.rate_voter_total) / params.m] * params.m
    total = sum(weights)
    bounds = []
    acc = Fraction(0)
    for w in weights[:-1]:
        acc += w
        bounds.append(acc * HASH_SPACE // total)
    bounds.append(HASH_SPACE)
    return tuple(bounds)


def slot_of(u: int, params: SortitionParams) -> Slot:
    idx = bisect_right(sortition_boundaries(params), u)
    if idx == 0:
        return Slot(BlockType.PROPOSER)
    if idx == 1:
        return Slot(BlockType.TRANSACTION)
    return Slot(BlockType.VOTER, idx - 2)


def sortition(h: Hash, params: SortitionParams) -> Slot:
    return slot_of(int.from_bytes(h, "big"), params)


def slot_matches(block: Block, params: SortitionParams) -> bool:
    slot = sortition(block.hash, params)
    if slot.kind is not block.kind:
        return False
    if slot.kind is BlockType.VOTER:
        return slot.chain == block.content.chain_index
    return True


# ---------------------------------------------------------------------------
# Signatures
#
# Keyed-hash (HMAC-SHA256) scheme. The "public key" registered for an account
# is the secret itself, so this is NOT a real signature scheme: anyone holding
# the key directory can forge. It is deterministic and cheap, which is all the
# simulator needs.


@dataclass(frozen=True)
class KeyPair:
    secret: bytes

    @cached_property
    def account(self) -> AccountId:
        return sha256(b"prismsim-account", self.secret)


def keypair_from_seed(seed: bytes) -> KeyPair:
    return KeyPair(sha256(b"prismsim-secret", seed))


@dataclass
class KeyDirectory:
    keys: Dict[AccountId, bytes] = field(default_factory=dict)

    def register(self, kp: KeyPair) -> AccountId:
        self.keys[kp.account] = kp.secret
        return kp.account

    def __contains__(self, account: AccountId) -> bool:
        return account in self.keys


def _mac(secret: bytes, body: bytes) -> bytes:
    return hmac.digest(secret, body, "sha256")


def sign_tx(tx: Transaction, secret: bytes) -> Transaction:
    return tx.with_signature(_mac(secret, tx.body))


def verify_tx(tx: Transaction, keys: KeyDirectory) -> bool:
    secret = keys.keys.get(tx.sender)
    if secret is None:
        return False
    return hmac.compare_digest(_mac(secret, tx.body), tx.signature)


def verify_batch(
    txs: Sequence[Transaction], keys: KeyDirectory, workers: int = 1,
    pool: Optional[ThreadPoolExecutor] = None,
) -> List[bool]:
    """Verify signatures, optionally fanned out over a thread pool.

    Result order always matches ``txs``; the worker count never changes it.
    """
    if workers <= 1 or len(txs) < 2:
        return [verify_tx(tx, keys) for tx in txs]
    chunk = max(1, -(-len(txs) // workers))
    parts = [txs[i:i + chunk] for i in range(0, len(txs), chunk)]

    def run(part):
        return [verify_tx(tx, keys) for tx in part]

    if pool is None:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, parts))
    else:
        results = list(pool.map(run, parts))
    return [ok for part in results for ok in part]


# ---------------------------------------------------------------------------
# Codec


def _encode_app(app: ApplicationCall) -> bytes:
    if isinstance(app, NativePayment):
        return b"\x00" + _acct(app.to) + struct.pack(">Q", app.amount)
    if isinstance(app, DoNothing):
        return b"\x01"
    if isinstance(app, CpuHeavy):
        return b"\x02" + struct.pack(">H", app.length)
    if isinstance(app, IoHeavy):
        return b"\x03" + struct.pack(">H", app.count)
    if isinstance(app, TokenTransfer):
        return b"\x04" + _acct(app.token_owner) + _acct(app.to) + struct.pack(">Q", app.amount)
    raise TypeError(f"unknown application call {app!r}")


def _acct(a: bytes) -> bytes:
    if len(a) != HASH_LEN:
        raise ValueError("account ids and hashes are 32 bytes")
    return a


def _encode_tx_body(tx: Transaction) -> bytes:
    return (
        _acct(tx.sender)
        + struct.pack(">Q", tx.nonce)
        + _encode_app(tx.app)
        + struct.pack(">Q", tx.gas_limit)
    )


def encode_tx(tx: Transaction) -> bytes:
    return tx.encoded


def encode_content(content: BlockContent) -> bytes:
    if isinstance(content, ProposerPayload):
        return b"".join([
            b"\x00",
            struct.pack(">QI", content.level, len(content.tx_refs)),
            *map(_acct, content.tx_refs),
            struct.pack(">I", len(content.proposer_refs)),
            *map(_acct, content.proposer_refs),
        ])
    if isinstance(content, VoterPayload):
        parts = [b"\x01", struct.pack(">II", content.chain_index, len(content.votes))]
        for level, target in content.votes:
            parts.append(struct.pack(">Q", level))
            parts.append(_acct(target))
        return b"".join(parts)
    if isinstance(content, TransactionPayload):
        parts = [b"\x02", struct.pack(">I", len(content.txs))]
        for tx in content.txs:
            enc = tx.encoded
            parts.append(struct.pack(">I", len(enc)))
            parts.append(enc)
        return b"".join(parts)
    raise TypeError(f"unknown block content {content!r}")


def serialize(block: Block) -> bytes:
    return block.header.encoded + encode_content(block.content)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos} (need {n} bytes)")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")


def _decode_app(r: _Reader) -> ApplicationCall:
    (tag,) = r.unpack(">B")
    if tag == 0:
        to = r.take(32)
        (amount,) = r.unpack(">Q")
        return NativePayment(to, amount)
    if tag == 1:
        return DoNothing()
    if tag == 2:
        return CpuHeavy(*r.unpack(">H"))
    if tag == 3:
        return IoHeavy(*r.unpack(">H"))
    if tag == 4:
        owner, to = r.take(32), r.take(32)
        (amount,) = r.unpack(">Q")
        return TokenTransfer(owner, to, amount)
    raise DecodeError(f"unknown application tag {tag}")


def _decode_tx(r: _Reader) -> Transaction:
    sender = r.take(32)
    (nonce,) = r.unpack(">Q")
    app = _decode_app(r)
    gas_limit, sig_len = r.unpack(">QH")
    return Transaction(sender, nonce, app, gas_limit, r.take(sig_len))


def decode_tx(data: bytes) -> Transaction:
    r = _Reader(data)
    tx = _decode_tx(r)
    r.done()
    return tx


def _decode_content(r: _Reader) -> BlockContent:
    (tag,) = r.unpack(">B")
    if tag == 0:
        level, n = r.unpack(">QI")
        tx_refs = tuple(r.take(32) for _ in range(n))
        (n,) = r.unpack(">I")
        return ProposerPayload(level, tx_refs, tuple(r.take(32) for _ in range(n)))
    if tag == 1:
        chain, n = r.unpack(">II")
        votes = []
        for _ in range(n):
            (level,) = r.unpack(">Q")
            votes.append((level, r.take(32)))
        return VoterPayload(chain, tuple(votes))
    if tag == 2:
        (n,) = r.unpack(">I")
        txs = []
        for _ in range(n):
            (ln,) = r.unpack(">I")
            txs.append(decode_tx(r.take(ln)))
        return TransactionPayload(tuple(txs))
    raise DecodeError(f"unknown content tag {tag}")


def deserialize(data: bytes) -> Block:
    r = _Reader(bytes(data))
    parent = r.take(32)
    miner_id, timestamp, nonce = r.unpack(">IdQ")
    root = r.take(32)
    start = r.pos
    content = _decode_content(r)
    r.done()
    if sha256(r.data[start:]) != root:
        raise DecodeError("content root does not match content")
    return Block(BlockHeader(parent, miner_id, timestamp, nonce, root), content)


def iter_tx_hashes(block: Block) -> Iterable[Hash]:
    if isinstance(block.content, TransactionPayload):
        for tx in block.content.txs:
            yield tx.hash

import itertools
import sys

import pytest

from prismsim.types import (
    ZERO_HASH,
    NativePayment,
    ProposerPayload,
    SortitionParams,
    Transaction,
    TransactionPayload,
    VoterPayload,
    keypair_from_seed,
    make_block,
    sign_tx,
)

_nonce = itertools.count(1)


def fresh_nonce():
    return next(_nonce)


def proposer(parent, level, tx_refs=(), proposer_refs=(), nonce=None):
    return make_block(parent, 0, 0.0, nonce or fresh_nonce(), ProposerPayload(level, tuple(tx_refs), tuple(proposer_refs)))


def voter(parent, chain, votes=(), nonce=None):
    return make_block(parent, 0, 0.0, nonce or fresh_nonce(), VoterPayload(chain, tuple(votes)))


def txblock(txs=(), nonce=None):
    return make_block(ZERO_HASH, 0, 0.0, nonce or fresh_nonce(), TransactionPayload(tuple(txs)))


def payment(kp, nonce, to=b"\x01" * 32, amount=1, gas=21000):
    return sign_tx(Transaction(kp.account, nonce, NativePayment(to, amount), gas), kp.secret)


@pytest.fixture
def params3():
    return SortitionParams(1.0, 3.0, 1.0, 3)


@pytest.fixture
def alice():
    return keypair_from_seed(b"alice")


@pytest.fixture
def bob():
    return keypair_from_seed(b"bob")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

"""Acceptance criteria, one test each.

Every test records a single ``criterion N PASS|FAIL`` line with the measured
values before asserting; the lines are repeated in the pytest terminal summary.
"""
import math
import random
from functools import lru_cache

from prismsim.blocktree import BlocktreeState, insert_all
from prismsim.config import config_from_dict
from prismsim.harness import latency_bound, run_experiment
from prismsim.ledger import ConfirmationParams, ConfirmedLedger, try_confirm
from prismsim.types import CpuHeavy, DoNothing, NativePayment, Transaction, keypair_from_seed
from prismsim.vm import Counters, Executor, Outcome, WorldState, gas_for, run_cpu_heavy, run_io_heavy

from scenarios import brute_confirm, brute_vote_table, params_for, random_history

RESULTS = []


def report(n, ok, what, detail):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}  {what}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def run(**kw):
    return run_experiment(config_from_dict(kw))


@lru_cache(maxsize=None)
def baseline():
    """10 honest nodes, 20 voter chains, 600 s, payments at 50 tx/s."""
    return run(mode="integrated", n=10, m=20, duration=600, seed=1, workload=dict(app="payment", tx_rate=50))


def test_1_prefix_consistency():
    exp = baseline()
    m = exp.metrics
    ok = m.prefix_violations == 0 and m.confirmed_tx > 0 and exp.wall_seconds < 60
    report(1, ok, "prefix consistency",
           f"violations={m.prefix_violations} confirmed_tx={m.confirmed_tx} "
           f"ticks_checked={int(600 / exp.config.tick_interval)} wall={exp.wall_seconds:.1f}s (<60)")


def test_2_forking_rate():
    # one voter chain at 0.08 blocks/s; every block crosses one 1.25 s hop, so rate*delay = 0.1
    rates, sizes = [], []
    for seed in (1, 2, 3):
        exp = run(mode="consensus_only", n=10, degree=9, m=1, delay_ms=1250, seed=seed, duration=6500,
                  tick_interval=5.0, log_arrivals=False, workload=dict(tx_rate=0),
                  rates=dict(proposer=0.01, voter_per_chain=0.08, tx=0.01))
        rates.append(exp.metrics.forking_rate["voter_0"])
        sizes.append(len(exp.nodes[0].state.chains[0].depth) - 1)
    ok = all(0.05 <= r <= 0.15 for r in rates) and min(sizes) >= 500
    report(2, ok, "forking rate in [0.05, 0.15] over >=500 blocks",
           " ".join(f"{r:.3f}/{b}" for r, b in zip(rates, sizes)))


def _engine_table(state, m, height):
    out = {}
    for lv in range(1, height + 1):
        out[lv] = state.count_votes(lv)
    return out


def _brute_counts(blocks, m, height):
    table = brute_vote_table(blocks, m)
    out = {}
    for lv in range(1, height + 1):
        agg = {}
        for i in range(m):
            if lv in table[i]:
                t, d = table[i][lv]
                c, dmin = agg.get(t, (0, d))
                agg[t] = (c + 1, min(dmin, d))
        out[lv] = agg
    return out


def test_3_leader_election_oracle():
    rng = random.Random(2024)
    mismatches = 0
    confirmed = 0
    for _ in range(1000):
        m = rng.randint(1, 8)
        levels = rng.randint(1, 5)
        blocks = random_history(rng, m, levels, voter_blocks=rng.randint(0, 40))
        quorum, k = rng.randint(1, m), rng.randint(1, 4)
        fallback = rng.random() < 0.5
        s = BlocktreeState(params_for(m), check_sortition=False)
        insert_all(s, blocks)
        got = try_confirm(s, ConfirmedLedger.new(s), ConfirmationParams(quorum, k, plurality_fallback=fallback))
        want = brute_confirm(blocks, m, quorum, k, fallback)
        tables_agree = _engine_table(s, m, s.height) == _brute_counts(blocks, m, s.height)
        mismatches += (got != want) or not tables_agree
        confirmed += len(want)
    report(3, mismatches == 0, "count_votes + try_confirm vs brute force",
           f"mismatches={mismatches} of 1000 trees, {confirmed} leaders confirmed")


def _reversal_trials(k_conf, trials=100):
    hit = 0
    for seed in range(trials):
        exp = run(mode="consensus_only", n=4, degree=3, m=20, quorum=11, k_conf=k_conf, tick_interval=1.0,
                  duration=400, seed=seed, beta=0.3, log_arrivals=False, workload=dict(tx_rate=0),
                  attack=dict(strategy="private_vote_withhold"))
        hit += exp.metrics.reversals > 0
    return hit


def test_4_reversal_resistance():
    deep = _reversal_trials(8)
    shallow = _reversal_trials(1)
    report(4, deep == 0 and shallow >= 1, "reversals at beta=0.3",
           f"k_conf=8: {deep}/100 trials reversed (need 0); k_conf=1: {shallow}/100 (need >=1)")


def _integrated(**kw):
    base = dict(mode="integrated", n=10, seed=1, duration=900, warmup_fraction=0.3, log_arrivals=False)
    base.update(kw)
    return run(**base).metrics


def test_5_throughput_scaling():
    slow = _integrated(tx_block_capacity=20, rates=dict(tx=0.5), workload=dict(tx_rate=40))
    fast = _integrated(tx_block_capacity=20, rates=dict(tx=1.0), workload=dict(tx_rate=40))
    ratio = fast.confirmed_tx_per_s / slow.confirmed_tx_per_s
    vm_cap = dict(gas_per_second=630_000)  # 30 payments/s
    vm = run(mode="vm_only", duration=900, warmup_fraction=0.3, workload=dict(tx_rate=60), vm=vm_cap).metrics
    full = _integrated(rates=dict(tx=1.0), workload=dict(tx_rate=60), vm=vm_cap)
    share = full.confirmed_tx_per_s / vm.confirmed_tx_per_s
    ok = 1.6 <= ratio <= 2.4 and abs(share - 1) <= 0.15
    report(5, ok, "throughput scaling",
           f"rate_tx x2 -> {slow.confirmed_tx_per_s:.2f} to {fast.confirmed_tx_per_s:.2f} tx/s "
           f"(ratio {ratio:.2f}, need 2 +/- 20%); saturated {full.confirmed_tx_per_s:.2f} vs "
           f"vm_only {vm.confirmed_tx_per_s:.2f} tx/s ({share:.1%}, need 100 +/- 15%)")


def test_6_latency_bound():
    got = latency_bound(0.12, 1000, 2e-9, 10, 100)
    hand = 1.2 + 0.012 * math.log(5e8)
    rel = abs(got - hand) / hand
    sweep = [latency_bound(0.12, m, 2e-9, 10, 100) for m in (1, 10, 100, 1000)]
    mono = all(a > b for a, b in zip(sweep, sweep[1:]))
    report(6, rel <= 1e-9 and mono, "latency bound",
           f"{got:.10f} vs {hand:.10f} (rel {rel:.1e}); m sweep " + ", ".join(f"{v:.4f}" for v in sweep))


def _oracle_mix(n_tx=10_000, seed=7):
    """Random mix with spam, replays, overdrafts and short gas, audited per tx."""
    rng = random.Random(seed)
    ids = [keypair_from_seed(f"acc{i}".encode()).account for i in range(40)]
    state = WorldState()
    for a in ids[:30]:
        state.mint(a, rng.randint(0, 10**9))
    ex = Executor(state, check_conservation=True)
    nonce = {a: 0 for a in ids}
    bad = {"conservation": 0, "sanitization": 0, "spam": 0, "dup": 0}
    outcomes = {o: 0 for o in Outcome}
    seen, issued = set(), set()
    for blk in range(n_tx // 100):
        txs = []
        while len(txs) < 100:
            a = rng.choice(ids)
            nz = nonce[a] if rng.random() < 0.8 else rng.randint(0, nonce[a] + 2)
            app = rng.choice([NativePayment(rng.choice(ids), rng.randint(0, 4 * 10**7)), DoNothing(),
                              CpuHeavy(rng.randint(1, 30))])
            gas = gas_for(app) if rng.random() < 0.9 else 21_001
            tx = Transaction(a, nz, app, gas)
            if tx.hash in issued:
                continue
            issued.add(tx.hash)
            txs.append(tx)
            if nz == nonce[a]:
                nonce[a] += 1
        for tx in txs:
            before = state.snapshot()
            supply = state.total_supply
            receipt = ex.run_block(blk, [tx], 0.0)
            r = receipt[0].receipt if receipt else None
            if r is None:
                continue
            if tx.hash in seen:
                bad["dup"] += 1
            seen.add(tx.hash)
            outcomes[r.outcome] += 1
            after = state.snapshot()
            if sum(state.balance(a) for a in ids) + state.fees_burned != supply:
                bad["conservation"] += 1
            if r.outcome is Outcome.SPAM and after != before:
                bad["spam"] += 1
            if r.outcome is Outcome.SANITIZED:
                expect = dict((x[0], x) for x in before[1])
                got = dict((x[0], x) for x in after[1])
                s0, s1 = expect[tx.sender], got[tx.sender]
                others_same = all(got[k] == v for k, v in expect.items() if k != tx.sender)
                bumped = s1[2] - s0[2] == (0 if r.reason == "bad_nonce" else 1)
                if not (others_same and s0[1] - s1[1] == r.gas_used and bumped and s0[3] == s1[3]
                        and after[0] - before[0] == r.gas_used):
                    bad["sanitization"] += 1
    return bad, outcomes, ex


def test_7_execution_oracles():
    bad, outcomes, ex = _oracle_mix()
    exp = baseline()
    dup_nodes = 0
    for node in exp.nodes:
        hashes = [r.tx.hash for r in node.receipts]
        dup_nodes += len(hashes) != len(set(hashes))
    executed = sum(outcomes.values())
    net = exp.metrics
    ok = (not any(bad.values()) and ex.conservation_violations == ex.sanitization_violations == 0
          and min(outcomes.values()) > 0 and executed >= 10_000
          and dup_nodes == 0 and net.conservation_violations == net.duplicate_executions == 0
          and len(exp.nodes[0].receipts) >= 10_000)
    report(7, ok, "execution oracles",
           f"mix of {executed} txs ({', '.join(f'{o.value}={c}' for o, c in outcomes.items())}) "
           f"violations={bad}; network run {len(exp.nodes[0].receipts)} txs/node, "
           f"dup nodes={dup_nodes}, conservation={net.conservation_violations}")


def test_8_instrumentation_counters():
    c = Counters()
    run_cpu_heavy(255, c)
    s = WorldState()
    acct = keypair_from_seed(b"io").account
    s.mint(acct, 1)
    s.counters = Counters()
    run_io_heavy(s, acct)
    ok = c.comparisons == 32385 and (s.counters.writes, s.counters.reads) == (255, 510)
    report(8, ok, "CpuHeavy/IoHeavy counters",
           f"comparisons={c.comparisons} (32385) writes={s.counters.writes} (255) reads={s.counters.reads} (510)")


def test_9_bandwidth_breakdown():
    # rate_tx 4.8 = 10 x (0.08 + 5 * 0.08)
    m = run(mode="consensus_only", n=10, m=5, seed=1, duration=200, log_arrivals=False,
            rates=dict(proposer=0.08, voter_per_chain=0.08, tx=4.8), workload=dict(tx_rate=100)).metrics
    share = m.percent_by_type["transaction"]
    report(9, share > 60.0, "transaction share of mined bytes",
           f"{share:.2f}% (>60); " + ", ".join(f"{k}={v:.2f}%" for k, v in m.percent_by_type.items()))


def test_10_determinism(tmp_path):
    base = dict(mode="integrated", n=6, degree=3, m=8, duration=150, seed=11, workload=dict(tx_rate=20))
    names = ("events.log", "metrics.jsonl", "node0.ledger", "node5.receipts", "node2.mined")
    blobs = {}
    for tag, workers in (("a", 1), ("b", 1), ("c", 8)):
        run_experiment(config_from_dict(dict(base, workers=workers)), tmp_path / tag)
        blobs[tag] = [(tmp_path / tag / n).read_bytes() for n in names]
    same = blobs["a"] == blobs["b"] == blobs["c"]
    report(10, same and len(blobs["a"][0]) > 0, "byte-identical artifacts",
           f"{len(names)} files x 3 runs (workers 1, 1, 8) identical={same}, events.log {len(blobs['a'][0])} B")

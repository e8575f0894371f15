#!/usr/bin/env python3
"""Seeded attack trials.

withhold: share of trials with a confirmed-leader reversal, per k_conf.
balance:  proposers per level with and without the balancing attacker.

    python scripts/attack_trials.py withhold --k 1 2 4 8 --trials 100
    python scripts/attack_trials.py balance --beta 0.1 0.2 0.3
"""
import argparse
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor

from prismsim.config import config_from_dict
from prismsim.harness import run_experiment


def withhold(job):
    k, seed, beta = job
    exp = run_experiment(config_from_dict(dict(
        mode="consensus_only", n=4, degree=3, m=20, quorum=11, k_conf=k, tick_interval=1.0, duration=400,
        seed=seed, beta=beta, log_arrivals=False, workload=dict(tx_rate=0),
        attack=dict(strategy="private_vote_withhold"))))
    return k, exp.metrics.reversals > 0


def balance(job):
    beta, seed = job
    kw = dict(mode="consensus_only", n=10, seed=seed, duration=600, tick_interval=0.5,
              log_arrivals=False, workload=dict(tx_rate=0))
    if beta > 0:
        kw.update(beta=beta, attack=dict(strategy="proposer_balance"))
    st = run_experiment(config_from_dict(kw)).nodes[0].state
    per_level = Counter({lv: len(hs) for lv, hs in st.proposer_levels.items() if lv > 0})
    return beta, sum(per_level.values()) / max(len(per_level), 1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    w = sub.add_parser("withhold")
    w.add_argument("--k", type=int, nargs="+", default=[1, 2, 4, 8])
    w.add_argument("--trials", type=int, default=100)
    w.add_argument("--beta", type=float, default=0.3)
    b = sub.add_parser("balance")
    b.add_argument("--beta", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3])
    b.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args(argv)

    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        if args.cmd == "withhold":
            rows = list(pool.map(withhold, [(k, s, args.beta) for k in args.k for s in range(args.trials)]))
            print(f"{'k_conf':>6} {'reversed':>9}")
            for k in args.k:
                hits = sum(hit for kk, hit in rows if kk == k)
                print(f"{k:>6} {hits:>5}/{args.trials}")
        else:
            rows = list(pool.map(balance, [(beta, s) for beta in args.beta for s in range(1, args.seeds + 1)]))
            print(f"{'beta':>5} {'per level':>10} {'budget':>7}")
            for beta in args.beta:
                vals = [v for bb, v in rows if bb == beta]
                print(f"{beta:>5.2f} {sum(vals) / len(vals):>10.3f} {1 + beta / (1 - beta):>7.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Forking rate against rate x delay, Prism voter chain next to the
longest-chain baseline at the same block rate and seed.

    python scripts/forking_sweep.py --products 0.025 0.05 0.1 0.2 --seeds 1 2 3
"""
import argparse
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from prismsim.config import config_from_dict
from prismsim.harness import run_experiment

RATE = 0.08


def one(job):
    product, seed, duration = job
    common = dict(n=10, degree=9, delay_ms=1000 * product / RATE, seed=seed, duration=duration,
                  tick_interval=5.0, log_arrivals=False, workload=dict(tx_rate=0))
    prism = run_experiment(config_from_dict(dict(
        mode="consensus_only", m=1, rates=dict(proposer=0.01, voter_per_chain=RATE, tx=0.01), **common)))
    lc = run_experiment(config_from_dict(dict(mode="longest_chain", longest_chain=dict(rate=RATE), **common)))
    return product, seed, prism.metrics.forking_rate["voter_0"], lc.metrics.forking_rate["chain"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--products", type=float, nargs="+", default=[0.025, 0.05, 0.1, 0.2, 0.4])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--duration", type=float, default=6500)
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args(argv)

    jobs = [(p, s, args.duration) for p in args.products for s in args.seeds]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(one, jobs))
    print(f"{'rate*delay':>10} {'voter':>8} {'longest':>8}")
    for p in args.products:
        v = [r[2] for r in rows if r[0] == p]
        c = [r[3] for r in rows if r[0] == p]
        print(f"{p:>10.3f} {statistics.mean(v):>8.3f} {statistics.mean(c):>8.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

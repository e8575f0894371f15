#!/usr/bin/env python3
"""VM-only / consensus-only / integrated throughput for every workload.

Generation for each app is capped at the VM-only capacity implied by
``--gas-per-second``, then the same rate is pushed through consensus alone
and through the integrated system.

    python scripts/baselines.py --duration 900 --out results/baselines.jsonl
"""
import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from prismsim.config import config_from_dict
from prismsim.harness import run_experiment
from prismsim.types import CpuHeavy, DoNothing, IoHeavy, NativePayment, TokenTransfer, ZERO_HASH
from prismsim.vm import gas_for
from prismsim.workload import APPS

SAMPLE_APP = {
    "payment": NativePayment(ZERO_HASH, 1),
    "donothing": DoNothing(),
    "cpuheavy": CpuHeavy(),
    "ioheavy": IoHeavy(),
    "token": TokenTransfer(ZERO_HASH, ZERO_HASH, 1),
}


def one(job):
    mode, app, rate, args = job
    cfg = dict(mode=mode, seed=args.seed, duration=args.duration, warmup_fraction=args.warmup,
               workload=dict(app=app, tx_rate=rate), vm=dict(gas_per_second=args.gas_per_second),
               rates=dict(tx=args.rate_tx), log_arrivals=False)
    m = run_experiment(config_from_dict(cfg)).metrics
    return dict(mode=mode, app=app, tx_rate=rate, tx_per_s=m.confirmed_tx_per_s,
                latency_mean=m.latency_mean, invariants_ok=m.invariants_ok())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--apps", nargs="+", default=list(APPS), choices=APPS)
    ap.add_argument("--duration", type=float, default=900)
    ap.add_argument("--warmup", type=float, default=0.3)
    ap.add_argument("--gas-per-second", type=float, default=21000 * 30)
    ap.add_argument("--rate-tx", type=float, default=1.0, help="tx block rate for prism modes")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=None)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    jobs = []
    for app in args.apps:
        cap = args.gas_per_second / gas_for(SAMPLE_APP[app])
        jobs += [(mode, app, round(cap, 3), args) for mode in ("vm_only", "consensus_only", "integrated")]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(one, jobs))

    out = open(args.out, "w") if args.out else None
    print(f"{'app':<10} {'mode':<15} {'gen':>8} {'tx/s':>8} {'latency':>9}")
    for r in rows:
        lat = "-" if r["latency_mean"] is None else f"{r['latency_mean']:.1f}"
        print(f"{r['app']:<10} {r['mode']:<15} {r['tx_rate']:>8.2f} {r['tx_per_s']:>8.2f} {lat:>9}")
        if out:
            out.write(json.dumps(r, sort_keys=True) + "\n")
    if out:
        out.close()
    return 0 if all(r["invariants_ok"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())

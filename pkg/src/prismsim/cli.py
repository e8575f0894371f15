"""Command line entry point.

    prismsim run CONFIG [--out DIR]
    prismsim sweep 'configs/*.yaml' [--out DIR] [--jobs N]
    prismsim latency-bound --d 0.12 --m 1000 --eps 2e-9 --c1 10 --c2 100
    prismsim analyze EVENTS_LOG

Exit status is 0 only when every run-time invariant check passed.
"""
from __future__ import annotations

import argparse
import glob
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, load_config
from .harness import bandwidth_breakdown, latency_bound, run_experiment
from .netsim import EventLog


def _run_one(path: str, out: Optional[str]) -> tuple:
    cfg = load_config(path)
    exp = run_experiment(cfg, out)
    return path, exp.metrics, exp.wall_seconds


def cmd_run(args) -> int:
    try:
        _, m, wall = _run_one(args.config, args.out)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    print(m.table())
    print(f"wall_seconds  {wall:.2f}")
    print(m.to_json())
    return 0 if m.invariants_ok() else 1


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no configs match {args.pattern!r}", file=sys.stderr)
        return 2
    outs = [str(Path(args.out) / Path(p).stem) if args.out else None for p in paths]
    ok = True
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, m, wall in pool.map(_run_one, paths, outs):
            ok &= m.invariants_ok()
            print(f"# {path} ({wall:.1f}s)")
            print(m.to_json())
    return 0 if ok else 1


def cmd_latency_bound(args) -> int:
    try:
        print(f"{latency_bound(args.d, args.m, args.eps, args.c1, args.c2):.12g}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_analyze(args) -> int:
    log = EventLog.read(args.log)
    mined = [r for r in log.records if r.etype in ("mine", "release")]
    print(f"events        {len(log.records)}")
    print(f"blocks        {len(mined)}")
    for kind, (b, pct) in bandwidth_breakdown(log).items():
        print(f"{kind:<12}  {b:>12} B  {pct:6.2f}%")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="prismsim")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config")
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run every config matching a glob")
    p.add_argument("pattern")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("latency-bound", help="evaluate the confirmation latency bound")
    for name, typ in (("--d", float), ("--m", int), ("--eps", float), ("--c1", float), ("--c2", float)):
        p.add_argument(name, type=typ, required=True)
    p.set_defaults(fn=cmd_latency_bound)

    p = sub.add_parser("analyze", help="summarise an event log")
    p.add_argument("log")
    p.set_defaults(fn=cmd_analyze)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

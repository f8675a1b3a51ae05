"""Command line entry point: ``bandagg run|list|simulate``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, ExperimentConfig, parse_config, parse_schedulers
from .experiments import EXPERIMENTS, get_experiment, run_experiment, write_csv


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandagg", description="Multi-interface bandwidth aggregation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="base seed; run i uses seed+i")
        sp.add_argument("--runs", type=int, help="runs per sweep point and scheduler")
        sp.add_argument("--out", help="CSV output path (default: stdout)")
        sp.add_argument("--scheduler", action="append",
                        help="restrict to these schedulers (repeat or comma-separate)")
        sp.add_argument("--force-range", action="store_true",
                        help="allow parameters outside the nominal ranges")
        sp.add_argument("--duration", type=float, help="simulated seconds per run")
        sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        sp.add_argument("--quiet", action="store_true", help="no progress on stderr")

    r = sub.add_parser("run", help="run a built-in experiment")
    r.add_argument("experiment")
    common(r)
    sub.add_parser("list", help="list built-in experiments")
    s = sub.add_parser("simulate", help="run the experiment described by a config file")
    s.add_argument("config")
    common(s)
    return p


def _apply(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.runs is not None:
        kw["runs"] = args.runs
    if args.duration is not None:
        kw["duration"] = args.duration
    if args.out is not None:
        kw["out"] = args.out
    if args.scheduler:
        kw["schedulers"] = parse_schedulers(",".join(args.scheduler))
    return replace(cfg, **kw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for e in EXPERIMENTS.values():
            print(f"{e.name:16s} {e.description}")
        return 0
    try:
        if args.command == "run":
            exp = get_experiment(args.experiment)
            cfg = _apply(exp.config, args).validate(args.force_range or exp.force_range)
        else:
            text = Path(args.config).read_text()
            cfg = _apply(parse_config(text), args).validate(args.force_range)
        out = open(cfg.out, "w", newline="") if cfg.out else None
    except (ConfigError, KeyError, ValueError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) else e
        print(f"bandagg: error: {msg}", file=sys.stderr)
        return 2

    def progress(done, total):
        if not args.quiet:
            print(f"\r{cfg.name}: {done}/{total} runs", end="" if done < total else "\n", file=sys.stderr)

    try:
        rows = run_experiment(cfg, jobs=max(1, args.jobs), progress=progress)
        write_csv(rows, out or sys.stdout)
    finally:
        if out is not None:
            out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())

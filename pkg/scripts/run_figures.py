"""Run the four built-in studies and print a compact table per study.

    python scripts/run_figures.py --runs 15 --outdir results

Writes one CSV per experiment into ``--outdir``.
"""
import argparse
import sys
import time
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from bandagg.harness.experiments import EXPERIMENTS, run_experiment, write_csv


def table(rows):
    by_sched = defaultdict(dict)
    values = []
    for r in rows:
        v = r["sweep_value"]
        if v not in values:
            values.append(v)
        by_sched[r["scheduler"]][v] = float(r["mean_throughput_bps"]) / 1e6
    head = f"{'Mbps':>22s}" + "".join(f"{v:>8s}" for v in values)
    lines = [head]
    for s, pts in by_sched.items():
        lines.append(f"{s:>22s}" + "".join(f"{pts[v]:8.3f}" for v in values))
    return "\n".join(lines)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("experiments", nargs="*", default=list(EXPERIMENTS))
    args = ap.parse_args(argv)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.experiments:
        cfg = replace(EXPERIMENTS[name].config, runs=args.runs, seed=args.seed)
        t0 = time.time()
        rows = run_experiment(cfg, jobs=args.jobs)
        with open(out / f"{name}.csv", "w", newline="") as f:
            write_csv(rows, f)
        print(f"== {name} ({cfg.sweep_var}, {args.runs} runs, {time.time() - t0:.0f}s)")
        print(table(rows))
        sys.stdout.flush()


if __name__ == "__main__":
    main()

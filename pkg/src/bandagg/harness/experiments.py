"""Built-in experiments and the sweep runner that turns them into CSV rows."""
from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, TextIO

from ..estimation import DEFAULT_CLASS_RULES, Classifier
from ..scheduling import OPTIMAL, SchedulerKind
from ..netsim.engine import SimOptions, run_simulation
from .config import ExperimentConfig

CSV_COLUMNS = (
    "experiment", "scheduler", "sweep_var", "sweep_value",
    "mean_throughput_bps", "stddev", "runs", "seed_base",
)

K = SchedulerKind


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    config: ExperimentConfig
    # built-ins that deliberately leave the nominal ranges
    force_range: bool = False


def _builtin() -> dict:
    base = ExperimentConfig()
    exps = [
        Experiment(
            "bandwidth-sweep",
            "IF2 bandwidth 0.25..2 Mbps, nominal workload, all schedulers",
            replace(base, name="bandwidth-sweep", sweep_var="if2_bandwidth",
                    sweep_values=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)),
        ),
        Experiment(
            "loss-sweep",
            "IF2 loss 0..10 %, IF2 fixed at 1 Mbps, all schedulers",
            replace(base, name="loss-sweep", if2_bandwidth=1.0, sweep_var="if2_loss",
                    sweep_values=tuple(float(i) for i in range(11))),
        ),
        Experiment(
            "workload-sweep",
            "beta_large 0..5 conn/s with beta_small fixed at 13, IF2 at 1 Mbps",
            replace(base, name="workload-sweep", if2_bandwidth=1.0, sweep_var="beta_large",
                    sweep_values=tuple(float(i) for i in range(6))),
        ),
        Experiment(
            "granularity",
            "one long-lived flow plus bulk background (beta_large 0.25); IF2 2 Mbps and 1 Mbps",
            replace(base, name="granularity", long_lived=True, beta_small=0.0, beta_large=0.25,
                    sweep_var="if2_bandwidth", sweep_values=(2.0, 1.0),
                    schedulers=(K.ONLY_ONE, K.CO_MAX_THROUGHPUT, K.PO_WEIGHTED_ROUND_ROBIN,
                                K.PO_ROUND_ROBIN)),
            force_range=True,
        ),
    ]
    return {e.name: e for e in exps}


EXPERIMENTS = _builtin()


def get_experiment(name: str) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}") from None


def sim_options(cfg: ExperimentConfig) -> SimOptions:
    classifier = Classifier(list(cfg.class_rules) + list(DEFAULT_CLASS_RULES))
    return SimOptions(
        mode_policy=cfg.mode,
        primary_iface=cfg.primary_iface,
        policy=cfg.policy,
        classifier=classifier,
        interface_events=cfg.events,
    )


def run_point(cfg: ExperimentConfig, kind: SchedulerKind, seed: int) -> float:
    """Aggregate throughput (bits/s) of one simulation run."""
    return run_simulation(cfg.topology(), cfg.workload(seed), kind, sim_options(cfg)).aggregate_throughput


def _task(args) -> float:
    return run_point(*args)


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    return f"{x:.3f}"


def run_experiment(
    cfg: ExperimentConfig,
    jobs: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
) -> list[dict]:
    """Run every (sweep point, scheduler, run) and return CSV rows in a fixed order.

    Run ``i`` of every point and scheduler uses seed ``cfg.seed + i``, so
    schedulers are compared on the same arrivals.
    """
    points = cfg.points()
    tasks = [
        (pcfg, kind, cfg.seed + r)
        for _, pcfg in points
        for kind in cfg.schedulers
        for r in range(cfg.runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = []
        for i, t in enumerate(tasks):
            results.append(_task(t))
            if progress is not None:
                progress(i + 1, len(tasks))
    rows = []
    it = iter(results)
    for value, pcfg in points:
        for kind in cfg.schedulers:
            vals = [next(it) for _ in range(cfg.runs)]
            rows.append(_row(cfg, kind.value, value, statistics.fmean(vals),
                             statistics.stdev(vals) if len(vals) > 1 else 0.0))
        topo = pcfg.topology()
        optimal = sum(s.bandwidth_bps for s in topo.interfaces)
        rows.append(_row(cfg, OPTIMAL, value, optimal, 0.0))
    return rows


def _row(cfg: ExperimentConfig, scheduler: str, value, mean: float, sd: float) -> dict:
    return {
        "experiment": cfg.name,
        "scheduler": scheduler,
        "sweep_var": cfg.sweep_var or "",
        "sweep_value": "" if value is None else f"{value:g}",
        "mean_throughput_bps": _fmt(mean),
        "stddev": _fmt(sd),
        "runs": str(cfg.runs),
        "seed_base": str(cfg.seed),
    }


def write_csv(rows: Iterable[dict], out: TextIO) -> None:
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


def csv_text(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))

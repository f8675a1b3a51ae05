"""Poisson connection arrivals with exponentially distributed sizes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import AppKey, ConnectionSpec
from .rng import numpy_stream

LAMBDA_SMALL = 22_380
LAMBDA_LARGE = 285_000
SMALL_APP = AppKey("web", 80)
LARGE_APP = AppKey("bulk", 21)
LONG_APP = AppKey("long")
# stands in for an unbounded transfer
INFINITE_BYTES = 10**15


@dataclass(frozen=True)
class WorkloadSpec:
    beta_small: float = 13.0
    beta_large: float = 1.0
    lambda_small: float = LAMBDA_SMALL
    lambda_large: float = LAMBDA_LARGE
    duration: float = 60.0
    seed: int = 0
    long_lived: bool = False

    def __post_init__(self) -> None:
        if self.beta_small < 0 or self.beta_large < 0:
            raise ValueError("arrival rates must be non-negative")
        if self.lambda_small <= 0 or self.lambda_large <= 0:
            raise ValueError("mean sizes must be positive")
        if self.duration < 0:
            raise ValueError("negative duration")

    def offered_load_bps(self) -> float:
        return 8 * (self.beta_small * self.lambda_small + self.beta_large * self.lambda_large)


def _poisson_class(rng: np.random.Generator, rate: float, mean: float, duration: float):
    if rate <= 0 or duration <= 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    n = int(rng.poisson(rate * duration))
    times = np.sort(rng.uniform(0.0, duration, n))
    sizes = np.maximum(1, np.ceil(rng.exponential(mean, n))).astype(np.int64)
    return times, sizes


def generate_workload(spec: WorkloadSpec, dest_supports: bool = True) -> list[ConnectionSpec]:
    """Time-ordered connection requests from two independent Poisson classes.

    Each class draws from its own random stream, so changing one class's rate
    leaves the other's arrivals untouched. With ``long_lived`` an unbounded
    connection opens at t=0 ahead of everything else.
    """
    ts, ss = _poisson_class(numpy_stream(spec.seed, "workload/small"),
                            spec.beta_small, spec.lambda_small, spec.duration)
    tl, sl = _poisson_class(numpy_stream(spec.seed, "workload/large"),
                            spec.beta_large, spec.lambda_large, spec.duration)
    merged = [(float(t), 0, int(s)) for t, s in zip(ts, ss)]
    merged += [(float(t), 1, int(s)) for t, s in zip(tl, sl)]
    merged.sort()
    out = []
    if spec.long_lived:
        out.append(ConnectionSpec(0, LONG_APP, INFINITE_BYTES, 0.0, dest_supports))
    for t, cls, size in merged:
        app = SMALL_APP if cls == 0 else LARGE_APP
        out.append(ConnectionSpec(len(out), app, size, t, dest_supports))
    return out


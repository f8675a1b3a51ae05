"""Deterministic network simulator used by the experiment harness."""
from .engine import RunMetrics, SimOptions, Simulator, Topology, TopologyError, run_simulation, stream_bytes
from .link import Link, LinkSpec
from .workload import WorkloadSpec, generate_workload

__all__ = [
    "Link", "LinkSpec", "RunMetrics", "SimOptions", "Simulator", "Topology", "TopologyError",
    "WorkloadSpec", "generate_workload", "run_simulation", "stream_bytes",
]

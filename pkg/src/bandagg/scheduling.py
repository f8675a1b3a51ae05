"""Connection-level and chunk-level interface schedulers."""
from __future__ import annotations

import enum
import math
from fractions import Fraction
from typing import Optional, Sequence

from .core import (
    FRAME_HEADER_SIZE,
    Chunk,
    ConnectionRecord,
    ConnectionSpec,
    InterfaceState,
    NoInterfaceAvailable,
    PolicyRule,
    match_policy,
)
from .estimation import ProfileStore


class SchedulerKind(enum.Enum):
    ONLY_ONE = "OnlyOne"
    CO_ROUND_ROBIN = "CoRoundRobin"
    CO_WEIGHTED_ROUND_ROBIN = "CoWeightedRoundRobin"
    CO_MAX_THROUGHPUT = "CoMaxThroughput"
    PO_ROUND_ROBIN = "PoRoundRobin"
    PO_WEIGHTED_ROUND_ROBIN = "PoWeightedRoundRobin"

    @property
    def packet_oriented(self) -> bool:
        return self in (SchedulerKind.PO_ROUND_ROBIN, SchedulerKind.PO_WEIGHTED_ROUND_ROBIN)

    @property
    def connection_fallback(self) -> "SchedulerKind":
        """CO scheduler used for connections that cannot run packet-oriented."""
        if self is SchedulerKind.PO_ROUND_ROBIN:
            return SchedulerKind.CO_ROUND_ROBIN
        if self is SchedulerKind.PO_WEIGHTED_ROUND_ROBIN:
            return SchedulerKind.CO_WEIGHTED_ROUND_ROBIN
        return self

    @classmethod
    def parse(cls, name: str) -> "SchedulerKind":
        key = name.replace("-", "").replace("_", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise ValueError(f"unknown scheduler {name!r}; choose from {', '.join(k.value for k in cls)}")


# Name of the virtual upper-bound row in result tables.
OPTIMAL = "Optimal"


def up_interfaces(ifaces: Sequence[InterfaceState]) -> list[InterfaceState]:
    up = [i for i in ifaces if i.is_up]
    if not up:
        raise NoInterfaceAvailable("all interfaces are down")
    return up


class RoundRobin:
    """Rotation over up interfaces in index order."""

    def __init__(self) -> None:
        self.last: Optional[int] = None

    def pick(self, ifaces: Sequence[InterfaceState]) -> InterfaceState:
        up = sorted(up_interfaces(ifaces), key=lambda i: i.iface_id)
        if self.last is not None:
            for i in up:
                if i.iface_id > self.last:
                    self.last = i.iface_id
                    return i
        self.last = up[0].iface_id
        return up[0]


class WrrState:
    """Smooth weighted round robin; effective weight of each interface is its estimated bandwidth."""

    def __init__(self) -> None:
        self.current_weight: dict[int, float] = {}
        self._fallback = RoundRobin()

    def pick(self, ifaces: Sequence[InterfaceState]) -> InterfaceState:
        up = up_interfaces(ifaces)
        cands = [i for i in up if i.est_bandwidth > 0]
        if not cands:
            return self._fallback.pick(up)
        ids = {i.iface_id for i in cands}
        for k in list(self.current_weight):
            if k not in ids:
                del self.current_weight[k]
        total = 0.0
        best = None
        best_w = -math.inf
        for i in sorted(cands, key=lambda i: i.iface_id):
            w = self.current_weight.get(i.iface_id, 0.0) + i.est_bandwidth
            self.current_weight[i.iface_id] = w
            total += i.est_bandwidth
            if w > best_w:
                best, best_w = i, w
        self.current_weight[best.iface_id] -= total
        return best


def finish_time(iface: InterfaceState, demand: float) -> float:
    """Seconds for ``iface`` to drain its backlog plus ``demand`` bytes at the estimated rate."""
    if iface.est_bandwidth <= 0:
        return math.inf
    return (iface.backlog_bytes + demand) * 8 / iface.est_bandwidth


def _exact_finish(iface: InterfaceState, demand: float) -> Fraction:
    return (Fraction(iface.backlog_bytes) + Fraction(demand)) / Fraction(iface.est_bandwidth)


def min_finish_time(ifaces: Sequence[InterfaceState], demand: float) -> InterfaceState:
    """Interface with the least finish time; ties go to the lowest id.

    Floats pick the candidates; near-ties are settled with exact rationals so
    rounding can neither fake nor hide a tie.
    """
    cands = [(finish_time(i, demand), i.iface_id, i) for i in ifaces if i.est_bandwidth > 0]
    best = min(cands, key=lambda c: c[0])[0]
    close = [c for c in cands if c[0] <= best * (1 + 1e-9)]
    if len(close) == 1:
        return close[0][2]
    return min(close, key=lambda c: (_exact_finish(c[2], demand), c[1]))[2]


class ConnectionScheduler:
    """Assigns whole connections to interfaces (OnlyOne and the Co* kinds)."""

    def __init__(self, primary: int = 0, policy: Sequence[PolicyRule] = ()):
        self.primary = primary
        self.policy = tuple(policy)
        self.rr = RoundRobin()
        self.wrr = WrrState()

    def select(
        self,
        kind: SchedulerKind,
        conn: ConnectionSpec,
        ifaces: Sequence[InterfaceState],
        profiles: ProfileStore,
    ) -> InterfaceState:
        if kind.packet_oriented:
            raise ValueError(f"{kind.value} schedules chunks, not connections")
        up = up_interfaces(ifaces)
        rule = None
        if self.policy:
            rule = match_policy(self.policy, conn.app_key, profiles.get(conn.app_key).qual_class)
        if rule is not None:
            for i in up:
                if i.iface_id == rule.pinned_iface:
                    return i
        if kind is SchedulerKind.ONLY_ONE:
            for i in up:
                if i.iface_id == self.primary:
                    return i
            raise NoInterfaceAvailable(f"primary interface {self.primary} is down")
        if kind is SchedulerKind.CO_ROUND_ROBIN:
            return self.rr.pick(up)
        if kind is SchedulerKind.CO_WEIGHTED_ROUND_ROBIN:
            return self.wrr.pick(up)
        demand = profiles.c_demand(conn.app_key)
        if all(i.est_bandwidth <= 0 for i in up):
            return self.rr.pick(up)
        return min_finish_time(up, demand)

    def schedule(
        self,
        kind: SchedulerKind,
        conn: ConnectionSpec,
        ifaces: Sequence[InterfaceState],
        profiles: ProfileStore,
    ) -> ConnectionRecord:
        """Pick an interface and charge the app's predicted demand to its backlog."""
        iface = self.select(kind, conn, ifaces, profiles)
        predicted = profiles.c_demand(conn.app_key)
        iface.add_backlog(predicted)
        return ConnectionRecord(conn, assigned_iface=iface.iface_id, predicted_bytes=predicted)


def schedule_connection(
    kind: SchedulerKind,
    conn: ConnectionSpec,
    ifaces: Sequence[InterfaceState],
    profiles: ProfileStore,
    policy: Sequence[PolicyRule] = (),
    scheduler: Optional[ConnectionScheduler] = None,
) -> int:
    sched = scheduler or ConnectionScheduler(policy=policy)
    return sched.schedule(kind, conn, ifaces, profiles).assigned_iface


class ChunkScheduler:
    """Assigns chunks to interfaces. Deliberately blind to application profiles."""

    def __init__(self) -> None:
        self.rr = RoundRobin()
        self.wrr = WrrState()

    def schedule(self, kind: SchedulerKind, chunk: Chunk, ifaces: Sequence[InterfaceState]) -> int:
        if kind is SchedulerKind.PO_ROUND_ROBIN:
            iface = self.rr.pick(ifaces)
        elif kind is SchedulerKind.PO_WEIGHTED_ROUND_ROBIN:
            iface = self.wrr.pick(ifaces)
        else:
            raise ValueError(f"{kind.value} schedules connections, not chunks")
        iface.add_backlog(chunk.payload_len + FRAME_HEADER_SIZE)
        return iface.iface_id


def schedule_chunk(
    kind: SchedulerKind,
    chunk: Chunk,
    ifaces: Sequence[InterfaceState],
    wrr: Optional[WrrState] = None,
) -> int:
    sched = ChunkScheduler()
    if wrr is not None:
        sched.wrr = wrr
    return sched.schedule(kind, chunk, ifaces)


def note_transmitted(record: ConnectionRecord, iface: InterfaceState, nbytes: int) -> None:
    """Drain predicted backlog as a CO connection transmits new bytes."""
    before = min(record.predicted_bytes, record.bytes_sent)
    record.bytes_sent += nbytes
    after = min(record.predicted_bytes, record.bytes_sent)
    iface.drain_backlog(after - before)


def on_connection_finished(record: ConnectionRecord, ifaces: Sequence[InterfaceState]) -> int:
    """Release whatever part of the prediction was never transmitted; returns the reduction."""
    if record.assigned_iface is None:
        return 0
    residual = int(max(0.0, record.predicted_bytes - record.bytes_sent))
    for i in ifaces:
        if i.iface_id == record.assigned_iface:
            before = i.backlog_bytes
            i.drain_backlog(residual)
            return before - i.backlog_bytes
    return 0


def optimal_throughput(ifaces: Sequence[InterfaceState]) -> float:
    """Sum of configured rates of up interfaces; a reporting bound, not a scheduler."""
    return float(sum(i.bandwidth_bps for i in ifaces if i.is_up))

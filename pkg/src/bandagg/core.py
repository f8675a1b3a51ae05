"""Domain types shared by the estimator, schedulers, transport and simulator."""
from __future__ import annotations

import enum
import fnmatch
from dataclasses import dataclass
from typing import NamedTuple, Optional

# EWMA smoothing coefficient (1/8, so the update is a 3-bit shift in fixed point).
ALPHA = 0.125

MIN_MTU = 576
DEFAULT_MTU = 1500
FRAME_HEADER_SIZE = 18
# TCP + IP headers carried by every simulated segment.
TRANSPORT_OVERHEAD = 40


class AggregationError(Exception):
    """Base class for errors raised by this package."""


class NoInterfaceAvailable(AggregationError):
    pass


class BackpressureExceeded(AggregationError):
    pass


class MigrationImpossible(AggregationError):
    pass


class QualClass(enum.Enum):
    REALTIME = "realtime"
    BANDWIDTH_INTENSIVE = "bandwidth"
    UNKNOWN = "unknown"


class OperationMode(enum.Enum):
    CONNECTION_ORIENTED = "connection"
    PACKET_ORIENTED = "packet"


class ConnState(enum.Enum):
    ACTIVE = "active"
    FINISHED = "finished"
    # CO connection whose interface failed under it.
    ABORTED = "aborted"


class AppKey(NamedTuple):
    """Application identity: process name first, well-known port as a fallback."""

    name: str
    port: Optional[int] = None

    def __str__(self) -> str:
        if self.port is None:
            return self.name
        return f"{self.name}:{self.port}"


def chunk_payload_size(mtu: int = DEFAULT_MTU) -> int:
    """Application bytes per chunk so that one framed chunk fills one MTU-sized packet."""
    return mtu - FRAME_HEADER_SIZE - TRANSPORT_OVERHEAD


@dataclass
class InterfaceState:
    iface_id: int
    est_bandwidth: float
    est_loss_ratio: float = 0.0
    mtu: int = DEFAULT_MTU
    backlog_bytes: int = 0
    is_up: bool = True
    # configured link rate; only the optimal baseline and the simulator read it
    bandwidth_bps: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.est_loss_ratio <= 1.0:
            raise ValueError(f"loss ratio {self.est_loss_ratio} outside [0, 1]")
        if self.mtu < MIN_MTU:
            raise ValueError(f"mtu {self.mtu} below {MIN_MTU}")
        if self.est_bandwidth < 0:
            raise ValueError("bandwidth must be non-negative")

    def add_backlog(self, nbytes: float) -> None:
        self.backlog_bytes += int(nbytes)

    def drain_backlog(self, nbytes: float) -> None:
        self.backlog_bytes = max(0, self.backlog_bytes - int(nbytes))


def new_interface(
    iface_id: int,
    bandwidth_bps: float,
    loss_ratio: float = 0.0,
    mtu: int = DEFAULT_MTU,
    *,
    known: bool = True,
) -> InterfaceState:
    """Create an up interface with an empty backlog.

    With ``known=False`` the bandwidth estimate starts at zero and has to be
    learned from samples.
    """
    if bandwidth_bps < 0:
        raise ValueError("bandwidth must be non-negative")
    if not 0.0 <= loss_ratio <= 1.0:
        raise ValueError(f"loss ratio {loss_ratio} outside [0, 1]")
    if mtu < MIN_MTU:
        raise ValueError(f"mtu {mtu} below {MIN_MTU}")
    return InterfaceState(
        iface_id=iface_id,
        est_bandwidth=float(bandwidth_bps) if known else 0.0,
        est_loss_ratio=loss_ratio if known else 0.0,
        mtu=mtu,
        bandwidth_bps=float(bandwidth_bps),
    )


@dataclass(frozen=True)
class AppProfile:
    app_key: AppKey
    qual_class: QualClass = QualClass.UNKNOWN
    c_demand: float = 0.0
    completed_connections: int = 0


@dataclass(frozen=True)
class ConnectionSpec:
    conn_id: int
    app_key: AppKey
    total_bytes: int
    arrival_time: float
    dest_supports_dbas: bool = True

    def __post_init__(self) -> None:
        if self.total_bytes <= 0:
            raise ValueError("a connection must carry at least one byte")


@dataclass
class ConnectionRecord:
    spec: ConnectionSpec
    assigned_iface: Optional[int] = None
    bytes_acked: int = 0
    state: ConnState = ConnState.ACTIVE
    # demand predicted at assignment and the first-transmission bytes since;
    # used for backlog accounting on the assigned interface
    predicted_bytes: float = 0.0
    bytes_sent: int = 0
    finish_time: Optional[float] = None

    def ack(self, nbytes: int) -> None:
        if nbytes < 0:
            raise ValueError("acked byte count cannot decrease")
        self.bytes_acked = min(self.spec.total_bytes, self.bytes_acked + nbytes)
        if self.bytes_acked == self.spec.total_bytes:
            self.state = ConnState.FINISHED


@dataclass(frozen=True)
class Chunk:
    conn_id: int
    chunk_id: int
    payload_len: int
    acked: bool = False


@dataclass(frozen=True)
class PolicyRule:
    """Pin matching applications to one interface.

    ``pattern`` is a glob on the process name, ``port:<n>`` for a port, or
    ``class:<realtime|bandwidth|unknown>`` for a qualitative class.
    """

    pattern: str
    pinned_iface: int

    def matches(self, app_key: AppKey, qual_class: QualClass = QualClass.UNKNOWN) -> bool:
        pat = self.pattern.lower()
        if pat.startswith("class:"):
            return qual_class.value == pat[6:]
        if pat.startswith("port:"):
            return app_key.port is not None and str(app_key.port) == pat[5:]
        return fnmatch.fnmatchcase(app_key.name.lower(), pat)


def match_policy(
    rules: "tuple[PolicyRule, ...] | list[PolicyRule]",
    app_key: AppKey,
    qual_class: QualClass = QualClass.UNKNOWN,
) -> Optional[PolicyRule]:
    for rule in rules:
        if rule.matches(app_key, qual_class):
            return rule
    return None


@dataclass
class InterfaceEvent:
    """Scripted interface failure (``up=False``) or restoration."""

    time: float
    iface_id: int
    up: bool

    @property
    def kind(self) -> str:
        return "restore" if self.up else "fail"


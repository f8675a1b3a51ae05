"""Bandwidth aggregation across multiple client network interfaces."""
from .core import (
    AggregationError,
    AppKey,
    AppProfile,
    BackpressureExceeded,
    Chunk,
    ConnectionRecord,
    ConnectionSpec,
    ConnState,
    InterfaceEvent,
    InterfaceState,
    MigrationImpossible,
    NoInterfaceAvailable,
    OperationMode,
    PolicyRule,
    QualClass,
    new_interface,
)
from .scheduling import SchedulerKind

__version__ = "0.1.0"

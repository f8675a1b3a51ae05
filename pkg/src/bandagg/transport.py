"""Packet-oriented transport pieces: chunk framing, reordering, ack tracking,
mode detection and migration of chunks off a failed interface.

Frame layout (big-endian, 18-byte header)::

    magic[2]=DB A5 | version[1]=01 | type[1] | conn_id[4] | chunk_id[8] | payload_len[2] | payload
"""
from __future__ import annotations

import enum
import socket
import struct
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Union

from .core import (
    DEFAULT_MTU,
    FRAME_HEADER_SIZE,
    BackpressureExceeded,
    Chunk,
    InterfaceState,
    MigrationImpossible,
    NoInterfaceAvailable,
    OperationMode,
)

MAGIC = b"\xdb\xa5"
VERSION = 0x01
SERVICE_PORT = 48059
DEFAULT_DETECT_TIMEOUT = 0.5
DEFAULT_REORDER_CAPACITY = 4096

_HEADER = struct.Struct("!2sBBIQH")
assert _HEADER.size == FRAME_HEADER_SIZE


class FrameType(enum.IntEnum):
    DATA = 0
    ACK = 1
    PROBE = 2


class FrameError(ValueError):
    """Malformed frame. ``reason`` is one of: truncated, magic, version, type, length, oversize."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class ChunkFrame:
    frame_type: FrameType
    conn_id: int
    chunk_id: int
    payload: bytes = b""

    @property
    def payload_len(self) -> int:
        return len(self.payload)


def encode_frame(frame: ChunkFrame, mtu: Optional[int] = DEFAULT_MTU) -> bytes:
    n = len(frame.payload)
    if n > 0xFFFF:
        raise FrameError("oversize", f"payload of {n} bytes")
    if frame.frame_type is FrameType.DATA and mtu is not None and n + FRAME_HEADER_SIZE > mtu:
        raise FrameError("oversize", f"{n} + {FRAME_HEADER_SIZE} exceeds MTU {mtu}")
    if frame.frame_type is FrameType.ACK and n:
        raise FrameError("length", "ACK frames carry no payload")
    if not 0 <= frame.conn_id < 1 << 32 or not 0 <= frame.chunk_id < 1 << 64:
        raise FrameError("oversize", "id out of field range")
    head = _HEADER.pack(MAGIC, VERSION, int(frame.frame_type), frame.conn_id, frame.chunk_id, n)
    return head + bytes(frame.payload)


def decode_frame(data: bytes) -> ChunkFrame:
    """Inverse of :func:`encode_frame`; ``data`` must hold exactly one frame."""
    if len(data) < FRAME_HEADER_SIZE:
        raise FrameError("truncated", f"{len(data)} bytes is shorter than the header")
    magic, version, ftype, conn_id, chunk_id, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameError("magic", magic.hex())
    if version != VERSION:
        raise FrameError("version", str(version))
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise FrameError("type", str(ftype)) from None
    if len(data) < FRAME_HEADER_SIZE + n:
        raise FrameError("truncated", f"payload needs {n} bytes, have {len(data) - FRAME_HEADER_SIZE}")
    if len(data) > FRAME_HEADER_SIZE + n:
        raise FrameError("length", "trailing bytes after payload")
    if ftype is FrameType.ACK and n:
        raise FrameError("length", "ACK frame with payload")
    return ChunkFrame(ftype, conn_id, chunk_id, bytes(data[FRAME_HEADER_SIZE:]))


def ack_frame(conn_id: int, chunk_id: int) -> ChunkFrame:
    return ChunkFrame(FrameType.ACK, conn_id, chunk_id)


class ReorderBuffer:
    """Receiver-side resequencing of chunks arriving over several interfaces."""

    def __init__(self, capacity: int = DEFAULT_REORDER_CAPACITY, start: int = 0):
        self.capacity = capacity
        self.next_expected = start
        self.pending: dict[int, Any] = {}

    def accept(self, chunk_id: int, payload: Any) -> list:
        if chunk_id < 0:
            raise ValueError("negative chunk id")
        if chunk_id < self.next_expected or chunk_id in self.pending:
            return []
        if chunk_id > self.next_expected:
            if len(self.pending) >= self.capacity:
                raise BackpressureExceeded(
                    f"{len(self.pending)} chunks pending ahead of {self.next_expected}"
                )
            self.pending[chunk_id] = payload
            return []
        out = [payload]
        nxt = chunk_id + 1
        pending = self.pending
        while nxt in pending:
            out.append(pending.pop(nxt))
            nxt += 1
        self.next_expected = nxt
        return out

    def __len__(self) -> int:
        return len(self.pending)


def reorder_accept(buf: ReorderBuffer, chunk: Chunk, payload: Any = None) -> list:
    return buf.accept(chunk.chunk_id, chunk.payload_len if payload is None else payload)


@dataclass
class Unacked:
    payload: Any
    iface: int
    send_time: float


class UnackedSet:
    """Sender-side record of chunks not yet acknowledged, keyed by chunk id."""

    def __init__(self) -> None:
        self.entries: dict[int, Unacked] = {}

    def add(self, chunk_id: int, payload: Any, iface: int, send_time: float) -> None:
        self.entries[chunk_id] = Unacked(payload, iface, send_time)

    def ack(self, chunk_id: int) -> Optional[Unacked]:
        return self.entries.pop(chunk_id, None)

    def on_iface(self, iface_id: int) -> list[int]:
        return sorted(c for c, u in self.entries.items() if u.iface == iface_id)

    def __contains__(self, chunk_id: int) -> bool:
        return chunk_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def on_interface_down(
    iface_id: int,
    unacked: UnackedSet,
    ifaces: Sequence[InterfaceState],
    reschedule: Callable[[int, Any], int],
    now: float = 0.0,
) -> list[tuple[int, int]]:
    """Move every unacked chunk that was sent on ``iface_id`` to a surviving interface.

    ``reschedule(chunk_id, payload)`` must return the new interface id (normally a
    chunk scheduler call). Chunk ids are preserved. Returns ``(chunk_id, new_iface)``
    pairs in chunk order.
    """
    stranded = unacked.on_iface(iface_id)
    if not stranded:
        return []
    if not any(i.is_up and i.iface_id != iface_id for i in ifaces):
        raise MigrationImpossible(f"{len(stranded)} chunks stranded on interface {iface_id}")
    moved = []
    for cid in stranded:
        entry = unacked.entries[cid]
        try:
            new = reschedule(cid, entry.payload)
        except NoInterfaceAvailable as e:
            raise MigrationImpossible(str(e)) from e
        entry.iface = new
        entry.send_time = now
        moved.append((cid, new))
    return moved


@dataclass(frozen=True)
class Endpoint:
    """Simulated destination for mode detection."""

    runs_service: bool
    reachable: bool = True
    rtt: float = 0.04


@dataclass(frozen=True)
class Detection:
    mode: OperationMode
    elapsed: float


def detect_mode(
    dest: Union[Endpoint, tuple[str, int], str],
    timeout: float = DEFAULT_DETECT_TIMEOUT,
    port: int = SERVICE_PORT,
) -> Detection:
    """Try the reserved service port on ``dest``; any failure means connection-oriented.

    ``dest`` is an :class:`Endpoint` (resolved in simulated time), a host name
    (the service port is appended) or an explicit ``(host, port)`` pair, which
    is probed with a real TCP connect.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    if isinstance(dest, Endpoint):
        if not dest.reachable or dest.rtt >= timeout:
            return Detection(OperationMode.CONNECTION_ORIENTED, timeout)
        mode = OperationMode.PACKET_ORIENTED if dest.runs_service else OperationMode.CONNECTION_ORIENTED
        return Detection(mode, dest.rtt)
    addr = (dest, port) if isinstance(dest, str) else dest
    t0 = time.monotonic()
    try:
        with socket.create_connection(addr, timeout=timeout):
            mode = OperationMode.PACKET_ORIENTED
    except OSError:
        mode = OperationMode.CONNECTION_ORIENTED
    return Detection(mode, min(time.monotonic() - t0, timeout))

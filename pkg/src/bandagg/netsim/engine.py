"""Discrete-event simulation of a multi-interface client sending to one server.

Topology: each client interface is a shaped link to an intermediate node,
which forwards over the server link L1. ACKs return over the same interface
as pure propagation delay. Every connection (CO mode) or every
(connection, interface) pair (PO mode) runs its own Reno flow.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Optional, Sequence

from .. import scheduling as sched
from ..core import (
    FRAME_HEADER_SIZE,
    TRANSPORT_OVERHEAD,
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
    chunk_payload_size,
    new_interface,
)
from ..estimation import (
    DEFAULT_PROBE_BYTES,
    DEFAULT_PROBE_PERIOD,
    DEFAULT_SAMPLE_WINDOW,
    BandwidthSample,
    Classifier,
    ProfileStore,
    plan_probes,
    probe_packet_count,
    update_interface_estimate,
)
from ..scheduling import ChunkScheduler, ConnectionScheduler, SchedulerKind
from ..transport import (
    DEFAULT_DETECT_TIMEOUT,
    DEFAULT_REORDER_CAPACITY,
    ChunkFrame,
    Endpoint,
    FrameType,
    ReorderBuffer,
    UnackedSet,
    ack_frame,
    decode_frame,
    detect_mode,
    encode_frame,
    on_interface_down,
)
from .events import EventQueue
from .link import Link, LinkSpec
from .rng import scalar_stream
from .tcp import MSS, RECV_WINDOW, TcpFlowState
from .workload import INFINITE_BYTES, WorkloadSpec, generate_workload

PO = OperationMode.PACKET_ORIENTED
CO = OperationMode.CONNECTION_ORIENTED


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    interfaces: tuple
    server_link: Optional[LinkSpec] = LinkSpec(6e6)
    # whether the server answers on the reserved service port
    server_runs_service: bool = True
    server_reachable: bool = True

    def validate(self) -> None:
        if not self.interfaces:
            raise TopologyError("client has no interfaces")
        if self.server_link is None:
            raise TopologyError("no link from the intermediate node to the server")

    def base_rtt(self, iface: int) -> float:
        return 2 * (self.interfaces[iface].prop_delay + self.server_link.prop_delay)

    @classmethod
    def nominal(
        cls,
        if2_bandwidth: float = 1e6,
        if2_loss: float = 0.0,
        if1_bandwidth: float = 2e6,
        if1_loss: float = 0.0,
        l1_bandwidth: float = 6e6,
        l1_loss: float = 0.0,
        prop_delay: float = 0.010,
        queue_packets: int = 64,
        mtu: int = 1500,
    ) -> "Topology":
        mk = lambda bw, loss: LinkSpec(bw, loss, prop_delay, queue_packets, mtu)  # noqa: E731
        return cls((mk(if1_bandwidth, if1_loss), mk(if2_bandwidth, if2_loss)), mk(l1_bandwidth, l1_loss))


@dataclass
class SimOptions:
    duration: Optional[float] = None  # defaults to the workload duration
    mode_policy: str = "detect"  # detect | connection | packet
    primary_iface: int = 0
    policy: tuple = ()
    classifier: Optional[Classifier] = None
    interface_events: tuple = ()
    extra_connections: tuple = ()
    sample_window: float = DEFAULT_SAMPLE_WINDOW
    probe_period: float = DEFAULT_PROBE_PERIOD
    probe_bytes: int = DEFAULT_PROBE_BYTES
    reorder_capacity: int = DEFAULT_REORDER_CAPACITY
    detect_timeout: float = DEFAULT_DETECT_TIMEOUT
    carry_payload: bool = False
    link_log: bool = False
    trace: Optional[IO[str]] = None


@dataclass
class RunMetrics:
    duration: float
    total_app_bytes_delivered: int
    total_app_bytes_injected: int
    per_iface_wire_bytes: list
    total_wire_bytes: int
    aggregate_throughput: float
    completion_times: list = field(default_factory=list)  # (conn_id, seconds)
    connections: int = 0
    finished: int = 0
    aborted: int = 0
    samples: dict = field(default_factory=dict)  # source -> count
    probe_transfers: int = 0
    migrated_chunks: int = 0
    events: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def stream_bytes(conn_id: int, offset: int, n: int) -> bytes:
    """Deterministic application payload for byte-exact delivery checks."""
    start = (offset + 7 * conn_id) % 251
    reps = (start + n) // 251 + 1
    return (_PATTERN * reps)[start:start + n]


_PATTERN = bytes(range(251))


class Flow:
    """One Reno connection over one interface; holds both the sender and receiver halves."""

    __slots__ = (
        "fid", "conn", "iface", "link", "po", "cc", "limit", "items",
        "snd_una", "next_seq", "high_seq", "rtt_seq", "rtt_time",
        "timer_gen", "timer_at", "deadline", "rcv_next", "ooo", "closed",
    )

    def __init__(self, fid: int, conn: "Conn", iface: int, link: Link, po: bool):
        self.fid = fid
        self.conn = conn
        self.iface = iface
        self.link = link
        self.po = po
        self.cc = TcpFlowState()
        self.limit = 0  # segments available to send
        self.items: list = []  # PO: chunk id per segment
        self.snd_una = 0
        self.next_seq = 0
        self.high_seq = 0
        self.rtt_seq = -1
        self.rtt_time = 0.0
        self.timer_gen = 0
        self.timer_at: Optional[float] = None
        self.deadline: Optional[float] = None
        self.rcv_next = 0
        self.ooo: set = set()
        self.closed = False


class PoState:
    __slots__ = (
        "base", "total", "n_chunks", "next_chunk", "lowest_unacked", "acked", "unacked",
        "subflows", "reorder", "delivered", "pending", "frames", "stream",
    )

    def __init__(self, base: int, total: int, capacity: int, chunk: int):
        self.base = base
        self.total = total
        self.n_chunks = -(-(total - base) // chunk)
        self.next_chunk = 0
        self.lowest_unacked = 0
        self.acked: set = set()
        self.unacked = UnackedSet()
        self.subflows: dict = {}  # iface -> Flow
        self.reorder = ReorderBuffer(capacity)
        self.delivered = 0
        self.pending: list = []  # chunk ids waiting for an up interface
        self.frames: dict = {}
        self.stream: list = []


class Conn:
    __slots__ = ("spec", "rec", "co_flow", "co_bytes", "co_delivered", "co_acked_done",
                 "po", "upgradable", "done", "co_stream", "co_kind")

    def __init__(self, spec: ConnectionSpec, rec: ConnectionRecord):
        self.spec = spec
        self.rec = rec
        self.co_flow: Optional[Flow] = None
        self.co_bytes = 0
        self.co_delivered = 0
        self.co_acked_done = True
        self.po: Optional[PoState] = None
        self.upgradable = False
        self.done = False
        self.co_stream: list = []
        self.co_kind: Optional[SchedulerKind] = None

    @property
    def app_delivered(self) -> int:
        out = self.co_delivered
        if self.po is not None and self.co_delivered >= self.co_bytes:
            out += self.po.delivered
        return out


class Simulator:
    def __init__(
        self,
        topology: Topology,
        workload: WorkloadSpec,
        kind: SchedulerKind,
        options: Optional[SimOptions] = None,
    ):
        topology.validate()
        self.opts = opts = options or SimOptions()
        if opts.mode_policy not in ("detect", "connection", "packet"):
            raise ValueError(f"unknown mode policy {opts.mode_policy!r}")
        n_if = len(topology.interfaces)
        for ev in opts.interface_events:
            if not 0 <= ev.iface_id < n_if:
                raise TopologyError(f"event names unknown interface {ev.iface_id}")
        self.topo = topology
        self.workload = workload
        self.kind = kind
        self.seed = workload.seed
        self.duration = workload.duration if opts.duration is None else opts.duration
        self.q = EventQueue()
        self.ifaces: list[InterfaceState] = [
            new_interface(i, s.bandwidth_bps, s.loss_ratio, s.mtu) for i, s in enumerate(topology.interfaces)
        ]
        self.links = [Link(s, scalar_stream(self.seed, f"link/{i}"), opts.link_log)
                      for i, s in enumerate(topology.interfaces)]
        self.server = Link(topology.server_link, scalar_stream(self.seed, "link/server"), opts.link_log)
        self.ret_delay = [s.prop_delay + topology.server_link.prop_delay for s in topology.interfaces]
        self.chunk = chunk_payload_size(min(s.mtu for s in topology.interfaces))
        self.profiles = ProfileStore(opts.classifier)
        self.co_sched = ConnectionScheduler(opts.primary_iface, opts.policy)
        self.po_sched = ChunkScheduler()
        self.probe_rng = scalar_stream(self.seed, "probe")
        self.conns: dict[int, Conn] = {}
        self.iface_flows: list[dict] = [dict() for _ in range(n_if)]
        self.po_conns: dict[int, Conn] = {}
        self.stalled: list[Conn] = []
        self.detected: dict[bool, object] = {}  # dest flag -> OperationMode | "pending"
        self._fid = 0
        # per-window estimator counters
        self.win_bytes = [0] * n_if
        self.win_pkts = [0] * n_if
        self.win_retx = [0] * n_if
        self.win_idle = [0.0] * n_if
        self.samples: dict[str, int] = {}
        self.probe_transfers = 0
        self.migrated = 0
        self.injected = 0
        self.trace = opts.trace

        specs = generate_workload(workload, topology.server_runs_service)
        specs += list(opts.extra_connections)
        for s in specs:
            if s.arrival_time < self.duration:
                self.q.push(s.arrival_time, self._on_arrival, s)
        for ev in sorted(opts.interface_events, key=lambda e: e.time):
            self.q.push(ev.time, self._on_iface_event, ev)
        if opts.sample_window > 0:
            self.q.push(opts.sample_window, self._on_sample_window)
        if opts.probe_period > 0:
            self.q.push(self.probe_rng.uniform(0, opts.probe_period), self._on_probe_round)

    # ------------------------------------------------------------------ helpers
    def _log(self, kind: str, **ids) -> None:
        if self.trace is not None:
            fields = " ".join(f"{k}={v}" for k, v in ids.items())
            self.trace.write(f"{self.q.now:.6f} {kind} {fields}\n")

    def _new_flow(self, conn: Conn, iface: int, po: bool) -> Flow:
        self._fid += 1
        f = Flow(self._fid, conn, iface, self.links[iface], po)
        self.iface_flows[iface][f.fid] = f
        return f

    def _close_flow(self, f: Flow) -> None:
        f.closed = True
        f.deadline = None
        self.iface_flows[f.iface].pop(f.fid, None)

    def _host_mode(self) -> OperationMode:
        if self.opts.mode_policy == "connection" or not self.kind.packet_oriented:
            return CO
        if self.opts.mode_policy == "packet":
            return PO
        return PO if self.detected.get(True) is PO else CO

    # ------------------------------------------------------------ TCP machinery
    def _seg_payload(self, f: Flow, k: int) -> int:
        if f.po:
            return self._chunk_len(f.conn.po, f.items[k]) + FRAME_HEADER_SIZE
        return min(MSS, f.conn.co_bytes - k * MSS)

    def _chunk_len(self, po: PoState, cid: int) -> int:
        rest = po.total - po.base - cid * self.chunk
        return self.chunk if rest > self.chunk else rest

    def _send(self, f: Flow, k: int, now: float) -> None:
        payload = self._seg_payload(f, k)
        size = payload + TRANSPORT_OVERHEAD
        link = f.link
        i = f.iface
        self.win_pkts[i] += 1
        if k >= f.high_seq:
            f.high_seq = k + 1
            self._on_first_tx(f, k, payload)
            if f.rtt_seq < 0:
                f.rtt_seq = k
                f.rtt_time = now
        else:
            self.win_retx[i] += 1
            if f.rtt_seq >= k:
                f.rtt_seq = -1  # Karn: never time a retransmitted segment
        arr = link.offer(now, size)
        if arr is not None:
            self.q.push(arr, self._at_shaper, f, k, size, link.epoch)

    def _try_send(self, f: Flow, now: float) -> None:
        if f.closed:
            return
        wnd = f.cc.cwnd if f.cc.cwnd < RECV_WINDOW else RECV_WINDOW
        sent = False
        while f.next_seq < f.limit and (f.next_seq - f.snd_una + 1) * MSS <= wnd + 1e-9:
            self._send(f, f.next_seq, now)
            f.next_seq += 1
            sent = True
        if sent and f.deadline is None:
            self._arm(f, now)

    def _arm(self, f: Flow, now: float) -> None:
        f.deadline = d = now + f.cc.rto
        if f.timer_at is None or f.timer_at > d:
            f.timer_gen += 1
            f.timer_at = d
            self.q.push(d, self._on_timer, f, f.timer_gen)

    def _on_timer(self, f: Flow, gen: int) -> None:
        if gen != f.timer_gen or f.closed:
            return
        f.timer_at = None
        if f.deadline is None:
            return
        now = self.q.now
        if f.deadline > now + 1e-12:
            f.timer_at = f.deadline
            self.q.push(f.deadline, self._on_timer, f, gen)
            return
        if f.snd_una >= f.high_seq:
            f.deadline = None
            return
        f.cc.on_timeout()
        f.next_seq = f.snd_una
        f.rtt_seq = -1
        f.deadline = None
        self._try_send(f, now)
        if f.deadline is None:
            self._arm(f, now)

    def _at_shaper(self, f: Flow, k: int, size: int, epoch: int) -> None:
        if f.link.epoch != epoch:
            return
        arr = self.server.offer(self.q.now, size)
        if arr is not None:
            self.q.push(arr, self._at_server, f, k, epoch)

    def _at_server(self, f: Flow, k: int, epoch: int) -> None:
        chunks = None
        if k == f.rcv_next:
            nxt = k + 1
            ooo = f.ooo
            while nxt in ooo:
                ooo.discard(nxt)
                nxt += 1
            f.rcv_next = nxt
            chunks = self._deliver(f, k, nxt)
        elif k > f.rcv_next:
            f.ooo.add(k)
        self.q.push(self.q.now + self.ret_delay[f.iface], self._on_ack, f, f.rcv_next, chunks, epoch)

    def _on_ack(self, f: Flow, ack: int, chunks, epoch: int) -> None:
        if f.link.epoch != epoch:
            return
        now = self.q.now
        if chunks and not f.conn.done:
            self._chunks_acked(f, chunks)
        if f.closed:
            return
        cc = f.cc
        if ack > f.snd_una:
            if 0 <= f.rtt_seq < ack:
                cc.on_rtt_sample(now - f.rtt_time)
                f.rtt_seq = -1
            cc.on_ack()
            old = f.snd_una
            f.snd_una = ack
            if f.next_seq < ack:
                f.next_seq = ack
            if not f.po:
                self._co_acked(f, old, ack)
                if f.closed:
                    return
            if f.snd_una < f.high_seq:
                self._arm(f, now)
            else:
                f.deadline = None
        elif ack == f.snd_una and f.next_seq > f.snd_una:
            if cc.on_dupack():
                f.rtt_seq = -1
                self._send(f, f.snd_una, now)
                self._arm(f, now)
        self._try_send(f, now)

    # ------------------------------------------------------- connection level
    def _on_arrival(self, spec: ConnectionSpec) -> None:
        if spec.total_bytes < INFINITE_BYTES:
            self.injected += spec.total_bytes
        rec = ConnectionRecord(spec)
        conn = Conn(spec, rec)
        self.conns[spec.conn_id] = conn
        mode = self._mode_for(conn)
        if mode is PO:
            self._start_po(conn, 0)
        else:
            self._start_co(conn)

    def _mode_for(self, conn: Conn) -> OperationMode:
        if not self.kind.packet_oriented or self.opts.mode_policy == "connection":
            return CO
        if self.opts.mode_policy == "packet":
            return PO if conn.spec.dest_supports_dbas else CO
        flag = conn.spec.dest_supports_dbas
        state = self.detected.get(flag)
        if state is None:
            ep = Endpoint(flag, self.topo.server_reachable, self.topo.base_rtt(0))
            res = detect_mode(ep, self.opts.detect_timeout)
            self.detected[flag] = "pending"
            self.q.push(self.q.now + res.elapsed, self._on_detected, flag, res.mode)
            self._log("detect", dest=int(flag))
            state = "pending"
        if state == "pending":
            conn.upgradable = True
            return CO
        return state

    def _on_detected(self, flag: bool, mode: OperationMode) -> None:
        self.detected[flag] = mode
        self._log("mode", dest=int(flag), mode=mode.value)
        if mode is not PO:
            return
        for conn in list(self.conns.values()):
            if conn.upgradable and not conn.done and conn.spec.dest_supports_dbas:
                self._upgrade(conn)

    def _start_co(self, conn: Conn) -> None:
        kind = self.kind.connection_fallback
        conn.co_kind = kind
        try:
            rec = self.co_sched.schedule(kind, conn.spec, self.ifaces, self.profiles)
        except NoInterfaceAvailable:
            self.stalled.append(conn)
            return
        conn.rec.assigned_iface = rec.assigned_iface
        conn.rec.predicted_bytes = rec.predicted_bytes
        conn.co_bytes = conn.spec.total_bytes
        conn.co_acked_done = False
        f = self._new_flow(conn, rec.assigned_iface, False)
        f.limit = -(-conn.co_bytes // MSS)
        conn.co_flow = f
        self._log("assign", conn=conn.spec.conn_id, iface=rec.assigned_iface, app=conn.spec.app_key.name)
        self._try_send(f, self.q.now)

    def _upgrade(self, conn: Conn) -> None:
        conn.upgradable = False
        f = conn.co_flow
        if f is None:
            if conn in self.stalled:
                self.stalled.remove(conn)
            self._start_po(conn, 0)
            return
        prefix = min(f.high_seq * MSS, conn.co_bytes)
        if prefix >= conn.spec.total_bytes:
            return
        f.limit = f.high_seq
        conn.co_bytes = prefix
        sched.on_connection_finished(conn.rec, self.ifaces)
        conn.rec.predicted_bytes = conn.rec.bytes_sent
        conn.rec.assigned_iface = f.iface
        if f.snd_una >= f.limit:
            self._co_part_done(conn)
        self._log("upgrade", conn=conn.spec.conn_id, prefix=prefix)
        self._start_po(conn, prefix)

    def _start_po(self, conn: Conn, base: int) -> None:
        conn.po = PoState(base, conn.spec.total_bytes, self.opts.reorder_capacity, self.chunk)
        self.po_conns[conn.spec.conn_id] = conn
        self._log("po-start", conn=conn.spec.conn_id, base=base)
        self._emit_chunks(conn)

    def _subflow(self, conn: Conn, iface: int) -> Flow:
        f = conn.po.subflows.get(iface)
        if f is None or f.closed:
            f = self._new_flow(conn, iface, True)
            conn.po.subflows[iface] = f
        return f

    def _place_chunk(self, conn: Conn, cid: int, touched: dict) -> bool:
        po = conn.po
        plen = self._chunk_len(po, cid)
        try:
            iface = self.po_sched.schedule(self.kind, Chunk(conn.spec.conn_id, cid, plen), self.ifaces)
        except NoInterfaceAvailable:
            return False
        payload = None
        if self.opts.carry_payload:
            data = stream_bytes(conn.spec.conn_id, po.base + cid * self.chunk, plen)
            payload = encode_frame(ChunkFrame(FrameType.DATA, conn.spec.conn_id, cid, data))
            po.frames[cid] = payload
        po.unacked.add(cid, payload, iface, self.q.now)
        f = self._subflow(conn, iface)
        f.items.append(cid)
        f.limit += 1
        touched[f.fid] = f
        return True

    def _emit_chunks(self, conn: Conn) -> None:
        po = conn.po
        touched: dict = {}
        while po.pending:
            if not self._place_chunk(conn, po.pending[0], touched):
                break
            po.pending.pop(0)
        limit = min(po.n_chunks, po.lowest_unacked + self.opts.reorder_capacity)
        budget = self._chunk_budget(po)
        while po.next_chunk < limit and not po.pending and len(po.unacked) < budget:
            if not self._place_chunk(conn, po.next_chunk, touched):
                break
            po.next_chunk += 1
        now = self.q.now
        for f in touched.values():
            self._try_send(f, now)

    def _chunk_budget(self, po: PoState) -> int:
        """Chunks a connection may have outstanding: what its subflows can send in one round."""
        n = 0
        for iface in self.ifaces:
            if iface.is_up:
                f = po.subflows.get(iface.iface_id)
                n += int(min(f.cc.cwnd, RECV_WINDOW) // MSS) if f is not None else 2
        return n

    def _on_first_tx(self, f: Flow, k: int, payload: int) -> None:
        if f.po:
            self.ifaces[f.iface].drain_backlog(payload)
        else:
            sched.note_transmitted(f.conn.rec, self.ifaces[f.iface], payload)

    def _deliver(self, f: Flow, a: int, b: int):
        """Receiver got segments [a, b) in order on flow ``f``."""
        conn = f.conn
        if not f.po:
            n = min(b * MSS, conn.co_bytes) - min(a * MSS, conn.co_bytes)
            if n > 0:
                if self.opts.carry_payload:
                    conn.co_stream.append(stream_bytes(conn.spec.conn_id, conn.co_delivered, n))
                conn.co_delivered += n
            return None
        po = conn.po
        cids = f.items[a:b]
        carry = self.opts.carry_payload
        for cid in cids:
            if carry:
                frame = decode_frame(po.frames[cid])
                out = po.reorder.accept(frame.chunk_id, frame.payload)
                for p in out:
                    po.stream.append(p)
                    po.delivered += len(p)
            else:
                out = po.reorder.accept(cid, self._chunk_len(po, cid))
                for p in out:
                    po.delivered += p
        if carry:
            return tuple(encode_frame(ack_frame(conn.spec.conn_id, c)) for c in cids)
        return tuple(cids)

    def _chunks_acked(self, f: Flow, chunks) -> None:
        conn = f.conn
        po = conn.po
        i = f.iface
        for c in chunks:
            if self.opts.carry_payload:
                c = decode_frame(c).chunk_id
            if po.unacked.ack(c) is None:
                continue
            po.acked.add(c)
            plen = self._chunk_len(po, c)
            self.win_bytes[i] += plen
            conn.rec.ack(plen)
        lo = po.lowest_unacked
        acked = po.acked
        while lo in acked:
            acked.discard(lo)
            lo += 1
        po.lowest_unacked = lo
        if conn.rec.bytes_acked >= conn.spec.total_bytes:
            self._finish(conn)
        elif po.next_chunk < po.n_chunks:
            self._emit_chunks(conn)

    def _co_acked(self, f: Flow, old: int, new: int) -> None:
        conn = f.conn
        n = min(new * MSS, conn.co_bytes) - min(old * MSS, conn.co_bytes)
        if n > 0:
            self.win_bytes[f.iface] += n
            conn.rec.ack(n)
        if new >= f.limit:
            self._co_part_done(conn)

    def _co_part_done(self, conn: Conn) -> None:
        conn.co_acked_done = True
        f = conn.co_flow
        if f is not None and f.snd_una >= f.limit:
            self._close_flow(f)
        if conn.rec.bytes_acked >= conn.spec.total_bytes:
            self._finish(conn)

    def _finish(self, conn: Conn) -> None:
        if conn.done:
            return
        conn.done = True
        rec = conn.rec
        rec.state = ConnState.FINISHED
        rec.finish_time = self.q.now
        self.profiles.record_completion(conn.spec.app_key, conn.spec.total_bytes)
        sched.on_connection_finished(rec, self.ifaces)
        if conn.co_flow is not None:
            self._close_flow(conn.co_flow)
        if conn.po is not None:
            for f in conn.po.subflows.values():
                self._close_flow(f)
            self.po_conns.pop(conn.spec.conn_id, None)
        self._log("finish", conn=conn.spec.conn_id, secs=f"{self.q.now - conn.spec.arrival_time:.6f}")

    # ------------------------------------------------------ interface events
    def _on_iface_event(self, ev: InterfaceEvent) -> None:
        now = self.q.now
        i = ev.iface_id
        self._log(ev.kind, iface=i)
        if not ev.up:
            if not self.ifaces[i].is_up:
                return
            self.ifaces[i].is_up = False
            self.links[i].set_up(now, False)
            for f in list(self.iface_flows[i].values()):
                conn = f.conn
                if f.po:
                    continue
                self._close_flow(f)
                if not conn.done:
                    sched.on_connection_finished(conn.rec, self.ifaces)
                    conn.rec.predicted_bytes = conn.rec.bytes_sent
                    conn.rec.state = ConnState.ABORTED
                    conn.done = True
                    if conn.po is not None:
                        for g in conn.po.subflows.values():
                            self._close_flow(g)
                        self.po_conns.pop(conn.spec.conn_id, None)
                    self._log("abort", conn=conn.spec.conn_id)
            for conn in list(self.po_conns.values()):
                self._migrate(conn, i)
            self.ifaces[i].backlog_bytes = 0
        else:
            if self.ifaces[i].is_up:
                return
            self.ifaces[i].is_up = True
            self.links[i].set_up(now, True)
            stalled, self.stalled = self.stalled, []
            for conn in stalled:
                if conn.upgradable and self.detected.get(conn.spec.dest_supports_dbas) is PO:
                    conn.upgradable = False
                    self._start_po(conn, 0)
                else:
                    self._start_co(conn)
            for conn in list(self.po_conns.values()):
                self._emit_chunks(conn)

    def _migrate(self, conn: Conn, i: int) -> None:
        po = conn.po
        f = po.subflows.pop(i, None)
        if f is not None:
            for k in range(f.high_seq, f.limit):
                self.ifaces[i].drain_backlog(self._chunk_len(po, f.items[k]) + FRAME_HEADER_SIZE)
            self._close_flow(f)
        touched: dict = {}

        def reschedule(cid, payload):
            plen = self._chunk_len(po, cid)
            new = self.po_sched.schedule(self.kind, Chunk(conn.spec.conn_id, cid, plen), self.ifaces)
            g = self._subflow(conn, new)
            g.items.append(cid)
            g.limit += 1
            touched[g.fid] = g
            return new

        try:
            moved = on_interface_down(i, po.unacked, self.ifaces, reschedule, self.q.now)
        except MigrationImpossible:
            stranded = po.unacked.on_iface(i)
            po.pending = sorted(set(po.pending) | set(stranded))
            for cid in stranded:
                po.unacked.ack(cid)
            moved = []
        self.migrated += len(moved)
        if moved:
            self._log("migrate", conn=conn.spec.conn_id, chunks=len(moved), src=i)
        for g in touched.values():
            self._try_send(g, self.q.now)

    # ------------------------------------------------------------ estimation
    def _on_sample_window(self) -> None:
        now = self.q.now
        w = self.opts.sample_window
        source = "peer" if self._host_mode() is PO else "passive"
        for i, iface in enumerate(self.ifaces):
            link = self.links[i]
            idle = link.idle_time_until(now)
            busy = idle - self.win_idle[i] <= 1e-9
            self.win_idle[i] = idle
            if busy and iface.is_up and self.win_pkts[i] > 0:
                s = BandwidthSample(i, self.win_bytes[i], w, min(self.win_retx[i], self.win_pkts[i]),
                                    self.win_pkts[i], source)
                update_interface_estimate(iface, s)
                self.samples[source] = self.samples.get(source, 0) + 1
                self._log("sample", iface=i, src=source, bps=f"{iface.est_bandwidth:.0f}")
            self.win_bytes[i] = 0
            self.win_pkts[i] = 0
            self.win_retx[i] = 0
        self.q.push(now + w, self._on_sample_window)

    def _on_probe_round(self) -> None:
        now = self.q.now
        for i in plan_probes(self.ifaces, self._host_mode()):
            self._send_probe(i, now)
        self.q.push(now + self.opts.probe_period, self._on_probe_round)

    def _send_probe(self, i: int, now: float) -> None:
        link = self.links[i]
        n = probe_packet_count(self.opts.probe_bytes, self.chunk)
        size = self.chunk + FRAME_HEADER_SIZE + TRANSPORT_OVERHEAD
        train = [n, []]
        for _ in range(n):
            arr = link.offer(now, size)
            if arr is not None:
                self.q.push(arr, self._probe_at_shaper, train, size, link, link.epoch)
        self.probe_transfers += 1
        spec = link.spec
        wait = (link.capacity_bytes + n * size) * 8 / spec.bandwidth_bps + 2 * self.ret_delay[i] + 0.05
        self.q.push(now + wait, self._probe_report, i, train, link.epoch)

    def _probe_at_shaper(self, train, size, link, epoch) -> None:
        if link.epoch != epoch:
            return
        arr = self.server.offer(self.q.now, size)
        if arr is not None:
            self.q.push(arr, self._probe_at_server, train)

    def _probe_at_server(self, train) -> None:
        train[1].append(self.q.now)

    def _probe_report(self, i: int, train, epoch: int) -> None:
        if self.links[i].epoch != epoch or not self.ifaces[i].is_up:
            return
        n, arrivals = train
        if len(arrivals) < 2 or arrivals[-1] <= arrivals[0]:
            return
        size = self.chunk + FRAME_HEADER_SIZE + TRANSPORT_OVERHEAD
        s = BandwidthSample(i, (len(arrivals) - 1) * size, arrivals[-1] - arrivals[0],
                            n - len(arrivals), n, "probe")
        update_interface_estimate(self.ifaces[i], s)
        self.samples["probe"] = self.samples.get("probe", 0) + 1
        self._log("probe", iface=i, bps=f"{self.ifaces[i].est_bandwidth:.0f}")

    # ------------------------------------------------------------------ run
    def run(self) -> RunMetrics:
        n = self.q.run_until(self.duration)
        delivered = sum(c.app_delivered for c in self.conns.values())
        per_if = [l.wire_bytes for l in self.links]
        done = sorted(
            (c.spec.conn_id, round(c.rec.finish_time - c.spec.arrival_time, 9))
            for c in self.conns.values() if c.rec.state is ConnState.FINISHED
        )
        return RunMetrics(
            duration=self.duration,
            total_app_bytes_delivered=delivered,
            total_app_bytes_injected=self.injected,
            per_iface_wire_bytes=per_if,
            total_wire_bytes=sum(per_if),
            aggregate_throughput=8 * delivered / self.duration if self.duration > 0 else 0.0,
            completion_times=[list(t) for t in done],
            connections=len(self.conns),
            finished=len(done),
            aborted=sum(1 for c in self.conns.values() if c.rec.state is ConnState.ABORTED),
            samples=dict(sorted(self.samples.items())),
            probe_transfers=self.probe_transfers,
            migrated_chunks=self.migrated,
            events=n,
        )

    def app_stream(self, conn_id: int) -> bytes:
        """Bytes handed to the receiving application for one connection (payload mode)."""
        conn = self.conns[conn_id]
        out = b"".join(conn.co_stream)
        if conn.po is not None and conn.co_delivered >= conn.co_bytes:
            out += b"".join(conn.po.stream)
        return out


def run_simulation(
    topology: Topology,
    workload: WorkloadSpec,
    kind: SchedulerKind,
    options: Optional[SimOptions] = None,
    **kw,
) -> RunMetrics:
    """Simulate one run; identical inputs give identical metrics."""
    if kw:
        options = replace(options or SimOptions(), **kw)
    return Simulator(topology, workload, kind, options).run()

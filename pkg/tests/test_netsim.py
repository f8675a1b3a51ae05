import io
import json

import pytest
from hypothesis import given, strategies as st

from bandagg.core import ALPHA, AppKey, ConnectionSpec, ConnState, InterfaceEvent
from bandagg.netsim import (
    LinkSpec,
    SimOptions,
    Simulator,
    Topology,
    TopologyError,
    WorkloadSpec,
    run_simulation,
    stream_bytes,
)
from bandagg.netsim.events import EventQueue
from bandagg.netsim.link import Link
from bandagg.netsim.rng import scalar_stream
from bandagg.scheduling import SchedulerKind

K = SchedulerKind
NOMINAL = Topology.nominal(1e6)


def sim(kind, workload=None, topo=NOMINAL, **opts):
    return Simulator(topo, workload or WorkloadSpec(seed=1), kind, SimOptions(**opts))


@given(st.lists(st.floats(0, 100, allow_nan=False), max_size=50))
def test_event_queue_order(times):
    q = EventQueue()
    seen = []
    for i, t in enumerate(times):
        q.push(t, lambda t=t, i=i: seen.append((t, i)))
    q.run_until(1e9)
    assert seen == sorted(seen)


def test_event_queue_rejects_past():
    q = EventQueue()
    q.push(1.0, lambda: None)
    q.run_until(2.0)
    with pytest.raises(ValueError):
        q.push(1.5, lambda: None)


@given(st.lists(st.tuples(st.floats(0, 0.01), st.integers(40, 1500)), max_size=300))
def test_link_spacing_and_queue(arrivals):
    link = Link(LinkSpec(1e6, queue_packets=8), scalar_stream(0, "t"), log=True)
    now = 0.0
    for gap, size in arrivals:
        now += gap
        link.offer(now, size)
    assert link.queued_bytes <= 8 * 1500
    prev = 0.0
    for depart, size in link.log:
        assert depart - prev >= size * 8 / 1e6 - 1e-12
        prev = depart


def test_link_down_drops_everything():
    link = Link(LinkSpec(1e6), scalar_stream(0, "t"))
    link.set_up(0.0, False)
    assert link.offer(0.1, 100) is None and link.epoch == 1


@pytest.mark.parametrize("kind", [K.ONLY_ONE, K.CO_MAX_THROUGHPUT, K.PO_WEIGHTED_ROUND_ROBIN])
def test_no_link_exceeds_its_rate(kind):
    s = sim(kind, link_log=True)
    s.run()
    for link in s.links + [s.server]:
        log = link.log
        cap = link.bandwidth / 8 + link.spec.mtu
        j = 0
        window = 0
        for depart, size in log:
            window += size
            while log[j][0] <= depart - 1.0:
                window -= log[j][1]
                j += 1
            assert window <= cap


@pytest.mark.parametrize("kind", list(K))
def test_determinism(kind):
    a = run_simulation(NOMINAL, WorkloadSpec(seed=9, duration=20), kind)
    b = run_simulation(NOMINAL, WorkloadSpec(seed=9, duration=20), kind)
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("kind", list(K))
def test_metric_identities_and_conservation(kind):
    m = run_simulation(NOMINAL, WorkloadSpec(seed=2, duration=20), kind)
    assert m.aggregate_throughput == 8 * m.total_app_bytes_delivered / m.duration
    assert sum(m.per_iface_wire_bytes) == m.total_wire_bytes
    assert 0 < m.total_app_bytes_delivered <= m.total_app_bytes_injected


@pytest.mark.parametrize("kind", list(K))
def test_light_load_drains_completely(kind):
    m = run_simulation(NOMINAL, WorkloadSpec(beta_small=3, beta_large=0.2, duration=10, seed=3), kind,
                       SimOptions(duration=60))
    assert m.total_app_bytes_delivered == m.total_app_bytes_injected
    assert m.finished == m.connections


def test_zero_workload():
    m = run_simulation(NOMINAL, WorkloadSpec(0, 0), K.CO_MAX_THROUGHPUT)
    assert m.aggregate_throughput == 0 and m.connections == 0


def test_only_one_saturates_primary():
    m = run_simulation(NOMINAL, WorkloadSpec(seed=0), K.ONLY_ONE)
    assert 1.8e6 <= m.aggregate_throughput <= 2.0e6


def test_estimate_stays_near_true_rate():
    log = io.StringIO()
    s = sim(K.ONLY_ONE, trace=log)
    s.run()
    for line in log.getvalue().splitlines():
        t, kind, *rest = line.split()
        if kind == "sample" and float(t) > 10:
            fields = dict(kv.split("=") for kv in rest)
            if fields["iface"] == "0":
                assert float(fields["bps"]) <= (1 + ALPHA) * 2e6


def test_co_connections_stay_on_one_interface():
    log = io.StringIO()
    s = sim(K.CO_ROUND_ROBIN, WorkloadSpec(seed=4, duration=20), trace=log)
    s.run()
    assigns = [l for l in log.getvalue().splitlines() if " assign " in l]
    conns = [l.split("conn=")[1].split()[0] for l in assigns]
    assert len(conns) == len(set(conns)) == len(s.conns)
    for c in s.conns.values():
        assert c.po is None and c.co_flow.iface == c.rec.assigned_iface


def test_probe_provenance():
    po = run_simulation(NOMINAL, WorkloadSpec(seed=1, duration=12), K.PO_WEIGHTED_ROUND_ROBIN,
                        SimOptions(mode_policy="packet"))
    assert po.probe_transfers == 0 and set(po.samples) == {"peer"}
    co = run_simulation(NOMINAL, WorkloadSpec(seed=1, duration=12), K.CO_WEIGHTED_ROUND_ROBIN)
    assert co.probe_transfers > 0 and "probe" in co.samples and "peer" not in co.samples


def test_one_second_trace_has_only_peer_samples_in_po_mode():
    log = io.StringIO()
    s = sim(K.PO_WEIGHTED_ROUND_ROBIN, WorkloadSpec(seed=1, duration=1.0), trace=log, mode_policy="packet")
    s.run()
    kinds = [l.split()[1] for l in log.getvalue().splitlines()]
    assert "probe" not in kinds
    assert [l for l in log.getvalue().splitlines() if " sample " in l and "src=peer" not in l] == []


def one_transfer(kind, total=3_000_000, events=(), **opts):
    spec = ConnectionSpec(0, AppKey("ftp", 21), total, 0.0)
    s = Simulator(NOMINAL, WorkloadSpec(0, 0, duration=40), kind,
                  SimOptions(extra_connections=(spec,), interface_events=events, carry_payload=True, **opts))
    return s, s.run()


@pytest.mark.parametrize("events", [
    (InterfaceEvent(4.0, 1, False),),
    (InterfaceEvent(4.0, 1, False), InterfaceEvent(6.0, 1, True)),
    (InterfaceEvent(4.0, 1, False), InterfaceEvent(5.0, 0, False), InterfaceEvent(9.0, 0, True)),
])
def test_migration_delivers_identical_stream(events):
    base, _ = one_transfer(K.PO_WEIGHTED_ROUND_ROBIN)
    s, m = one_transfer(K.PO_WEIGHTED_ROUND_ROBIN, events=events)
    assert m.migrated_chunks > 0
    assert s.app_stream(0) == base.app_stream(0) == stream_bytes(0, 0, 3_000_000)
    assert s.conns[0].rec.state is ConnState.FINISHED


def test_detection_upgrades_running_connection():
    s, _ = one_transfer(K.PO_WEIGHTED_ROUND_ROBIN)
    c = s.conns[0]
    assert 0 < c.co_bytes < c.spec.total_bytes and c.po is not None
    assert s.app_stream(0) == stream_bytes(0, 0, 3_000_000)


def test_legacy_destination_stays_connection_oriented():
    topo = Topology(NOMINAL.interfaces, NOMINAL.server_link, server_runs_service=False)
    m = run_simulation(topo, WorkloadSpec(seed=1, duration=10), K.PO_WEIGHTED_ROUND_ROBIN)
    assert "peer" not in m.samples and m.probe_transfers > 0


def test_co_connections_abort_with_their_interface():
    m = run_simulation(NOMINAL, WorkloadSpec(seed=1, duration=20), K.CO_ROUND_ROBIN,
                       SimOptions(interface_events=(InterfaceEvent(10.0, 1, False),)))
    assert m.aborted > 0


def test_fail_restore_without_traffic_is_a_no_op():
    w = WorkloadSpec(beta_small=2, beta_large=0, duration=5, seed=5)
    kw = dict(duration=30, probe_period=0)
    a = run_simulation(NOMINAL, w, K.CO_ROUND_ROBIN, SimOptions(**kw))
    b = run_simulation(NOMINAL, w, K.CO_ROUND_ROBIN, SimOptions(
        interface_events=(InterfaceEvent(20, 1, False), InterfaceEvent(21, 1, True)), **kw))
    da, db = json.loads(a.to_json()), json.loads(b.to_json())
    assert db.pop("events") == da.pop("events") + 2
    assert da == db


def test_failing_the_only_interface_stalls():
    topo = Topology((LinkSpec(2e6),), LinkSpec(6e6))
    s = Simulator(topo, WorkloadSpec(seed=1, duration=30), K.ONLY_ONE, SimOptions(
        interface_events=(InterfaceEvent(10, 0, False), InterfaceEvent(20, 0, True)), link_log=True))
    m = s.run()
    departures = [t for t, _ in s.links[0].log]
    assert not any(10 < t < 20 for t in departures)
    assert any(t > 20 for t in departures) and m.aggregate_throughput > 0


def test_invalid_topology():
    with pytest.raises(TopologyError):
        Simulator(Topology(()), WorkloadSpec(), K.ONLY_ONE)
    with pytest.raises(TopologyError):
        Simulator(Topology((LinkSpec(1e6),), None), WorkloadSpec(), K.ONLY_ONE)
    with pytest.raises(TopologyError):
        Simulator(NOMINAL, WorkloadSpec(), K.ONLY_ONE, SimOptions(interface_events=(InterfaceEvent(1, 5, False),)))


def test_trace_format():
    log = io.StringIO()
    sim(K.CO_MAX_THROUGHPUT, WorkloadSpec(seed=1, duration=2), trace=log).run()
    lines = log.getvalue().splitlines()
    assert lines
    for line in lines:
        t, kind, *fields = line.split()
        float(t)
        assert kind.isidentifier() or "-" in kind
        assert all("=" in f for f in fields)

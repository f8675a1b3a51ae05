import math

import pytest
from hypothesis import given, strategies as st

from bandagg.core import AppKey, ConnectionSpec
from bandagg.netsim import LinkSpec, SimOptions, Simulator, Topology, WorkloadSpec
from bandagg.netsim.tcp import MSS, RTO_MAX, RTO_MIN, TcpFlowState, tcp_on_ack, tcp_on_loss
from bandagg.netsim.workload import INFINITE_BYTES
from bandagg.scheduling import SchedulerKind


def test_slow_start_step():
    f = TcpFlowState()
    assert f.cwnd == 2 * MSS
    tcp_on_ack(f)
    assert f.cwnd == 3 * MSS


def test_triple_dupack_halves():
    f = TcpFlowState(cwnd=20 * MSS)
    assert [f.on_dupack() for _ in range(3)] == [False, False, True]
    assert f.cwnd == 10 * MSS and f.ssthresh == 10 * MSS
    # further dupacks in the same episode do not cut again
    assert not f.on_dupack() and f.cwnd == 10 * MSS


def test_recovery_exit_keeps_halved_window():
    f = TcpFlowState(cwnd=20 * MSS)
    for _ in range(3):
        f.on_dupack()
    f.on_ack()
    assert f.cwnd == 10 * MSS and not f.in_recovery


def test_timeout_resets_to_one_segment():
    f = TcpFlowState(cwnd=16 * MSS)
    tcp_on_loss(f, timeout=True)
    assert f.cwnd == MSS and f.ssthresh == 8 * MSS and f.rto == 2.0


def test_congestion_avoidance_grows_one_mss_per_window():
    f = TcpFlowState(cwnd=10 * MSS, ssthresh=5 * MSS)
    for _ in range(10):
        f.on_ack()
    assert f.cwnd == pytest.approx(11 * MSS, rel=0.01)


def test_rto_estimation_bounds():
    f = TcpFlowState()
    f.on_rtt_sample(0.001)
    assert f.rto == RTO_MIN
    for _ in range(10):
        f.on_timeout()
    assert f.rto == RTO_MAX


@given(st.lists(st.sampled_from(["ack", "dup", "loss", "rto"]), max_size=200))
def test_window_never_below_one_segment(ops):
    f = TcpFlowState()
    for op in ops:
        {"ack": f.on_ack, "dup": f.on_dupack, "loss": f.on_loss, "rto": f.on_timeout}[op]()
        assert f.cwnd >= MSS and f.ssthresh >= 2 * MSS


def reno_oracle(p, rtt, mss=MSS):
    # square-root law for Reno steady state
    return 8 * mss / (rtt * math.sqrt(2 * p / 3))


@pytest.mark.parametrize("seed", [0, 1])
def test_steady_throughput_matches_square_root_law(seed):
    p = 0.01
    topo = Topology((LinkSpec(50e6, p),), LinkSpec(100e6))
    long = ConnectionSpec(0, AppKey("long"), INFINITE_BYTES, 0.0)
    sim = Simulator(topo, WorkloadSpec(0, 0, duration=120, seed=seed), SchedulerKind.ONLY_ONE,
                    SimOptions(extra_connections=(long,), probe_period=0, sample_window=0))
    m = sim.run()
    want = reno_oracle(p, topo.base_rtt(0))
    assert want / 2 <= m.aggregate_throughput <= want * 2

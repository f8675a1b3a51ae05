"""Reno congestion control state.

Slow start below ssthresh, additive increase above it, halving on triple
duplicate ACK (fast recovery without window inflation) and reset to one
segment on retransmission timeout. RTO estimation follows RFC 6298.
"""
from __future__ import annotations

MSS = 1460
INIT_CWND = 2 * MSS
INIT_SSTHRESH = 65_535
RECV_WINDOW = 65_535
RTO_MIN = 0.2
RTO_INIT = 1.0
RTO_MAX = 60.0
DUPACK_THRESHOLD = 3


class TcpFlowState:
    __slots__ = ("mss", "cwnd", "ssthresh", "dupacks", "in_recovery", "srtt", "rttvar", "rto")

    def __init__(self, mss: int = MSS, cwnd: float = INIT_CWND, ssthresh: float = INIT_SSTHRESH):
        self.mss = mss
        self.cwnd = float(cwnd)
        self.ssthresh = float(ssthresh)
        self.dupacks = 0
        self.in_recovery = False
        self.srtt: float | None = None
        self.rttvar = 0.0
        self.rto = RTO_INIT

    @property
    def window(self) -> float:
        return min(self.cwnd, RECV_WINDOW)

    def on_ack(self) -> None:
        """A cumulative ACK advanced snd_una."""
        self.dupacks = 0
        if self.in_recovery:
            # leave fast recovery at the halved window
            self.in_recovery = False
            return
        if self.cwnd < self.ssthresh:
            self.cwnd += self.mss
        else:
            self.cwnd += self.mss * self.mss / self.cwnd

    def on_dupack(self) -> bool:
        """Count a duplicate ACK; True when it triggers fast retransmit."""
        self.dupacks += 1
        if self.dupacks == DUPACK_THRESHOLD and not self.in_recovery:
            self.on_loss()
            self.in_recovery = True
            return True
        return False

    def on_loss(self) -> None:
        """Multiplicative decrease after triple duplicate ACK."""
        self.ssthresh = max(self.cwnd / 2, 2 * self.mss)
        self.cwnd = self.ssthresh

    def on_timeout(self) -> None:
        self.ssthresh = max(self.cwnd / 2, 2 * self.mss)
        self.cwnd = float(self.mss)
        self.dupacks = 0
        self.in_recovery = False
        self.rto = min(self.rto * 2, RTO_MAX)

    def on_rtt_sample(self, rtt: float) -> None:
        if self.srtt is None:
            self.srtt = rtt
            self.rttvar = rtt / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.rto = min(max(RTO_MIN, self.srtt + 4 * self.rttvar), RTO_MAX)


def tcp_on_ack(flow: TcpFlowState) -> TcpFlowState:
    flow.on_ack()
    return flow


def tcp_on_loss(flow: TcpFlowState, timeout: bool = False) -> TcpFlowState:
    if timeout:
        flow.on_timeout()
    else:
        flow.on_loss()
    return flow


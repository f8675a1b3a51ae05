"""Shaped FIFO link with tail drop and Bernoulli random loss."""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..core import DEFAULT_MTU


@dataclass(frozen=True)
class LinkSpec:
    bandwidth_bps: float
    loss_ratio: float = 0.0
    prop_delay: float = 0.010
    queue_packets: int = 64
    mtu: int = DEFAULT_MTU

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ValueError("link bandwidth must be positive")
        if not 0.0 <= self.loss_ratio <= 1.0:
            raise ValueError("loss ratio outside [0, 1]")
        if self.prop_delay < 0 or self.queue_packets < 1:
            raise ValueError("bad delay or queue size")


class Link:
    """One direction of a link.

    Serialisation is computed at enqueue time from ``busy_until``, so a packet
    costs one event (its arrival) instead of separate departure events.
    """

    __slots__ = (
        "spec", "bandwidth", "prop_delay", "loss_ratio", "capacity_bytes", "rng",
        "busy_until", "queue", "queued_bytes", "epoch", "up", "idle_closed",
        "wire_bytes", "drops_queue", "drops_loss", "log",
    )

    def __init__(self, spec: LinkSpec, rng: random.Random, log: bool = False):
        self.spec = spec
        self.bandwidth = spec.bandwidth_bps
        self.prop_delay = spec.prop_delay
        self.loss_ratio = spec.loss_ratio
        self.capacity_bytes = spec.queue_packets * spec.mtu
        self.rng = rng
        self.busy_until = 0.0
        self.queue: deque = deque()  # (departure_time, size)
        self.queued_bytes = 0
        self.epoch = 0
        self.up = True
        self.idle_closed = 0.0
        self.wire_bytes = 0
        self.drops_queue = 0
        self.drops_loss = 0
        self.log: Optional[list] = [] if log else None

    def offer(self, now: float, size: int) -> Optional[float]:
        """Enqueue ``size`` bytes; returns the arrival time at the far end, or None if dropped."""
        if not self.up:
            return None
        q = self.queue
        while q and q[0][0] <= now:
            self.queued_bytes -= q.popleft()[1]
        if self.queued_bytes + size > self.capacity_bytes:
            self.drops_queue += 1
            return None
        self.wire_bytes += size
        start = self.busy_until
        if now > start:
            self.idle_closed += now - start
            start = now
        depart = start + size * 8.0 / self.bandwidth
        self.busy_until = depart
        q.append((depart, size))
        self.queued_bytes += size
        if self.log is not None:
            self.log.append((depart, size))
        # a lost packet still spends its serialisation time on the link
        if self.loss_ratio and self.rng.random() < self.loss_ratio:
            self.drops_loss += 1
            return None
        return depart + self.prop_delay

    def idle_time_until(self, now: float) -> float:
        """Cumulative idle (not transmitting) time on [0, now]."""
        return self.idle_closed + max(0.0, now - self.busy_until)

    def set_up(self, now: float, up: bool) -> None:
        if up == self.up:
            return
        if not up:
            # queued and in-flight packets are lost; the epoch tags stale arrivals
            self.wire_bytes -= sum(size for depart, size in self.queue if depart > now)
            self.queue.clear()
            if self.log is not None:
                while self.log and self.log[-1][0] > now:
                    self.log.pop()
            self.queued_bytes = 0
            self.idle_closed += max(0.0, now - self.busy_until) if self.busy_until < now else 0.0
            self.busy_until = now
            self.epoch += 1
        self.up = up

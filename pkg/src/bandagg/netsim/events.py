"""Deterministic event queue: time order, insertion order on ties."""
from __future__ import annotations

import heapq
from typing import Any, Callable


class EventQueue:
    def __init__(self) -> None:
        self._heap: list = []
        self._seq = 0
        self.now = 0.0

    def push(self, time: float, fn: Callable, *args: Any) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} is in the past (now={self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, fn, args))

    def pop(self) -> tuple[float, Callable, tuple]:
        time, _, fn, args = heapq.heappop(self._heap)
        self.now = time
        return time, fn, args

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else float("inf")

    def run_until(self, end: float) -> int:
        """Dispatch events with time <= ``end``; returns how many ran."""
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= end:
            time, _, fn, args = pop(heap)
            self.now = time
            fn(*args)
            n += 1
        self.now = max(self.now, end)
        return n

    def __len__(self) -> int:
        return len(self._heap)

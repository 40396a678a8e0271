"""Time-ordered event queue driving a simulation run."""

from __future__ import annotations

import heapq
import itertools
import math


class CausalityError(RuntimeError):
    pass


class EventQueue:
    """Min-heap of ``(time, sequence, callback, args)``.

    Events at the same instant fire in scheduling order. Scheduling into the
    past is refused.
    """

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0
        self.processed = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: float, callback, *args):
        if time < self.now:
            raise CausalityError(f"event at {time} scheduled from {self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), callback, args))

    def peek(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def run(self, until: float = math.inf):
        """Fire events with time <= ``until``; leave the clock at the last one fired."""
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= until:
            time, _, callback, args = pop(heap)
            self.now = time
            self.processed += 1
            callback(*args)

    def clear(self):
        self._heap.clear()

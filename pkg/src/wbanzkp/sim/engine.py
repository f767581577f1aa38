"""Single-queue discrete-event scheduler (times in milliseconds)."""
from __future__ import annotations

import heapq
import itertools


class Scheduler:
    """Events fire in timestamp order; ties go to the earlier insertion."""

    def __init__(self):
        self.now = 0.0
        self._heap = []
        self._seq = itertools.count()
        self.fired = 0

    def at(self, time: float, fn, *args):
        if time < self.now:
            time = self.now
        entry = [time, next(self._seq), fn, args, True]
        heapq.heappush(self._heap, entry)
        return entry

    def after(self, delay: float, fn, *args):
        return self.at(self.now + max(delay, 0.0), fn, *args)

    @staticmethod
    def cancel(entry):
        if entry is not None:
            entry[4] = False

    def run(self, until: float):
        heap = self._heap
        while heap and heap[0][0] <= until:
            time, _, fn, args, alive = heapq.heappop(heap)
            if not alive:
                continue
            self.now = time
            self.fired += 1
            fn(*args)
        self.now = max(self.now, until)

    def __len__(self):
        return len(self._heap)

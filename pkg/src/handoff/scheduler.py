"""Deterministic discrete-event scheduler on an integer millisecond clock.

Callbacks scheduled for the same instant run in a fixed total order:

1. link changes (``RANK_LINK``) before anything else,
2. then by agent id (lexicographic),
3. then by rank: message deliveries, action results/feedback, probes,
   the horizon check,
4. then by insertion order.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable, Optional

RANK_LINK = 0
RANK_DELIVERY = 1
RANK_ACTION = 2
RANK_PROBE = 3
RANK_HORIZON = 4


class Scheduler:
    def __init__(self, realtime_scale: Optional[float] = None):
        self.now = 0
        self._heap: list = []
        self._seq = itertools.count()
        self._realtime_scale = realtime_scale

    def __len__(self) -> int:
        return len(self._heap)

    def at(self, t: int, fn: Callable[[], None], *, agent: str = "",
           rank: int = RANK_ACTION) -> None:
        if t < self.now:
            raise ValueError(f"cannot schedule in the past ({t} < {self.now})")
        group = 0 if rank == RANK_LINK else 1
        heapq.heappush(self._heap, (int(t), group, agent, rank, next(self._seq), fn))

    def peek(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        if not self._heap:
            return False
        t, *_, fn = heapq.heappop(self._heap)
        if self._realtime_scale and t > self.now:
            # Demo mode only; never used for golden logs.
            time.sleep((t - self.now) * self._realtime_scale / 1000.0)
        self.now = t
        fn()
        return True

    def run(self, until: Optional[int] = None, stop: Optional[Callable[[], bool]] = None) -> None:
        """Run callbacks in order until the queue drains, ``until`` is passed,
        or ``stop()`` turns true."""
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            if stop is not None and stop():
                break
            self.step()

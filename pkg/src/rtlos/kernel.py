"""Deterministic event-driven simulation kernel.

One kernel instance owns a clock, an event calendar and a set of named
random-number streams.  Events are dispatched in (time, sequence) order,
with the sequence counter breaking same-time ties in insertion order.
The full kernel state can be snapshotted and restored, which the
clairvoyant length-of-stay oracle uses to fork a facility without
perturbing the main run.
"""

from __future__ import annotations

import heapq
import zlib
from random import Random
from typing import Any, Callable

__all__ = ["RngStreams", "SimKernel", "SchedulingError"]


class SchedulingError(RuntimeError):
    """An event was scheduled into the past; the replication is invalid."""


def _child_seed(master_seed: int, name: str) -> int:
    # crc32 of the stream name gives a stable, hash-randomization-free
    # offset so the same (seed, name) pair always yields the same stream.
    return (master_seed * 1_000_003 + zlib.crc32(name.encode())) % (2 ** 63)


class RngStreams:
    """Independent named substreams derived from one master seed.

    Drawing from one stream never advances another, so common random
    numbers can be used across simulation clones.
    """

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._streams: dict[str, Random] = {}

    def get(self, name: str) -> Random:
        rng = self._streams.get(name)
        if rng is None:
            rng = Random(_child_seed(self.master_seed, name))
            self._streams[name] = rng
        return rng

    def snapshot(self) -> dict:
        return {name: rng.getstate() for name, rng in self._streams.items()}

    def restore(self, state: dict) -> None:
        self._streams = {}
        for name, rng_state in state.items():
            rng = Random()
            rng.setstate(rng_state)
            self._streams[name] = rng

    def clone(self) -> "RngStreams":
        other = RngStreams(self.master_seed)
        other.restore(self.snapshot())
        return other


class SimKernel:
    """Clock plus event calendar.

    Events are plain tuples ``(time, seq, kind, a, b)``; the meaning of
    ``kind``/``a``/``b`` is up to the owner, which supplies the handler
    to :meth:`run_until`.
    """

    def __init__(self, streams: RngStreams):
        self.clock = 0.0
        self.streams = streams
        self._heap: list[tuple] = []
        self._seq = 0

    def schedule(self, time: float, kind: int, a: Any = None, b: Any = None) -> None:
        if time < self.clock:
            raise SchedulingError(f"cannot schedule at t={time} before clock {self.clock}")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, a, b))

    def run_until(self, t: float, handler: Callable[[float, int, Any, Any], None]) -> int:
        """Dispatch every event with time <= t; advance the clock to t.

        Returns the number of events processed.
        """
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= t:
            time, _seq, kind, a, b = pop(heap)
            self.clock = time
            handler(time, kind, a, b)
            n += 1
        if t > self.clock:
            self.clock = t
        return n

    def next_event_time(self) -> float:
        return self._heap[0][0] if self._heap else float("inf")

    def pending(self) -> int:
        return len(self._heap)

    # Event tuples are immutable, so a shallow list copy is a full copy
    # of the calendar.
    def snapshot(self) -> dict:
        return {
            "clock": self.clock,
            "heap": list(self._heap),
            "seq": self._seq,
            "streams": self.streams.snapshot(),
        }

    def restore(self, state: dict) -> None:
        self.clock = state["clock"]
        self._heap = list(state["heap"])
        self._seq = state["seq"]
        self.streams.restore(state["streams"])

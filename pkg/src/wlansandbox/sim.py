"""Discrete-event core: integer-microsecond clock, FIFO-stable event queue and
seeded counter-based random streams.

A :class:`Simulator` owns every piece of mutable state it touches, so separate
instances can be run from separate threads or processes without coordination.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, TextIO

import numpy as np

US_PER_S = 1_000_000

PRNG_NAME = "splitmix64-counter/blake2b-key-v1"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class EngineFault(RuntimeError):
    """Raised when the engine is asked to do something that can only be a bug,
    e.g. scheduling an event in the past."""


def seconds(s: float) -> int:
    """Convert seconds to integer simulation time (microseconds)."""
    return int(round(s * US_PER_S))


class EventKind(enum.Enum):
    BACKOFF_EXPIRY = "backoff_expiry"
    TX_END = "tx_end"
    ARRIVAL = "arrival"
    ITERATION_BOUNDARY = "iteration_boundary"
    MONITOR_SAMPLE = "monitor_sample"


@dataclass(frozen=True, order=True)
class Event:
    time: int
    seq: int
    kind: EventKind = field(compare=False)
    detail: object = field(default=None, compare=False)


class EventQueue:
    """Min-queue keyed on ``(time, seq)``; equal times pop in insertion order."""

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, kind: EventKind, detail: object = None) -> Event:
        if time < 0:
            raise EngineFault(f"negative event time {time}")
        ev = Event(int(time), self._next_seq, kind, detail)
        self._next_seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        return heapq.heappop(self._heap)


@dataclass(frozen=True)
class RunStats:
    processed: int
    pending: int
    clock: int


Handler = Callable[["Simulator", Event], None]


class Simulator:
    """Single-threaded event loop.

    Handlers receive ``(sim, event)`` and may schedule further events at or
    after ``sim.now``.  When ``trace`` is given, one CSV line
    ``time_us,seq,kind,detail`` is written per processed event; a handler may
    replace the detail field by returning a string.
    """

    def __init__(self, handlers: Mapping[EventKind, Handler] | None = None,
                 trace: TextIO | None = None) -> None:
        self.queue = EventQueue()
        self.handlers: dict[EventKind, Handler] = dict(handlers or {})
        self.now = 0
        self.trace = trace
        self.processed = 0

    def schedule(self, time: int, kind: EventKind, detail: object = None) -> Event:
        if time < self.now:
            raise EngineFault(f"event {kind.value} at t={time} scheduled in the past (now={self.now})")
        return self.queue.push(time, kind, detail)

    def run_until(self, t_end: int) -> RunStats:
        """Process every event with ``time <= t_end``, then set the clock to ``t_end``."""
        if t_end < self.now:
            raise EngineFault(f"run_until({t_end}) is behind the clock ({self.now})")
        pending_kinds = {ev.kind for ev in self.queue._heap}
        missing = pending_kinds - self.handlers.keys()
        if missing:
            raise EngineFault(f"no handler for {sorted(k.value for k in missing)}")
        while self.queue and self.queue.peek().time <= t_end:
            ev = self.queue.pop()
            handler = self.handlers.get(ev.kind)
            if handler is None:
                raise EngineFault(f"no handler for {ev.kind.value}")
            self.now = ev.time
            note = handler(self, ev)
            self.processed += 1
            if self.trace is not None:
                detail = note if note is not None else ("" if ev.detail is None else ev.detail)
                self.trace.write(f"{ev.time},{ev.seq},{ev.kind.value},{detail}\n")
        self.now = t_end
        return RunStats(self.processed, len(self.queue), self.now)


# -- random streams ---------------------------------------------------------

def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, stream_id: str) -> int:
    label = int.from_bytes(hashlib.blake2b(stream_id.encode(), digest_size=8).digest(), "little")
    return _mix64(_mix64(master_seed & _MASK64) ^ label)


def derive_seed(master_seed: int, label: str) -> int:
    """A 64-bit child seed, e.g. one per learning iteration."""
    return stream_key(master_seed, "seed:" + label)


class RngStream:
    """Counter-based uniform stream.

    Draw ``i`` of stream ``(master_seed, stream_id)`` is the SplitMix64 output
    at counter ``i`` under a key hashed from both, so any draw can be
    recomputed from its index alone and the bulk path (:meth:`draws`) matches
    the scalar path bit for bit.
    """

    algorithm = PRNG_NAME

    def __init__(self, master_seed: int, stream_id: str) -> None:
        self.master_seed = int(master_seed)
        self.stream_id = stream_id
        self.key = stream_key(self.master_seed, stream_id)
        self.index = 0

    def _value(self, i: int) -> float:
        z = _mix64((self.key + (i + 1) * _GAMMA) & _MASK64)
        return (z >> 11) * 2.0 ** -53

    def draw(self) -> float:
        u = self._value(self.index)
        self.index += 1
        return u

    def draws(self, n: int) -> np.ndarray:
        counters = np.arange(self.index + 1, self.index + n + 1, dtype=np.uint64)
        z = np.uint64(self.key) + counters * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.index += n
        return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def randrange(self, n: int) -> int:
        return min(int(self.draw() * n), n - 1)

    def numpy_generator(self) -> np.random.Generator:
        """Philox generator keyed by this stream, for non-uniform variates."""
        return np.random.Generator(np.random.Philox(key=self.key))


def rng_draw(stream: RngStream) -> float:
    return stream.draw()


def run_events(events: Iterable[tuple[int, EventKind, object]], handlers: Mapping[EventKind, Handler],
               t_end: int, trace: TextIO | None = None) -> tuple[Simulator, RunStats]:
    """Convenience wrapper: seed a fresh simulator with ``events`` and run it."""
    sim = Simulator(handlers, trace)
    for t, kind, detail in events:
        sim.schedule(t, kind, detail)
    return sim, sim.run_until(t_end)

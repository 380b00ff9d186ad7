"""Discrete-event kernel for fluid stochastic Petri nets with piecewise-linear fluid.

The kernel owns the fluid levels, their net flow rates, a deterministic clock
and an event queue holding timed-transition firings and fluid threshold hits.
A concrete net subclasses :class:`FluidNet` and implements the three event
handlers (`on_clock`, `on_timed`, `on_threshold`).

Random numbers come from :class:`RngStream`, a buffered wrapper around numpy's
PCG64 seeded through ``SeedSequence``.  Each named sub-stream is keyed by the
CRC-32 of its name, so the sample sequence depends only on (seed, name).
"""

from __future__ import annotations

import heapq
import itertools
import math
import zlib
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional, Sequence

import numpy as np

EPS = 1e-9
NEVER = math.inf

__all__ = [
    "EPS",
    "NEVER",
    "EventKind",
    "Event",
    "EventQueue",
    "LinearSegment",
    "RngStream",
    "stream_generator",
    "FluidNet",
    "SimulationError",
    "ConsistencyError",
    "sample_exponential",
    "resolve_immediate_conflict",
    "next_threshold_crossing",
    "advance_fluid",
    "apply_fluid_jump",
    "reschedule_exponential",
    "step",
    "format_trace_line",
    "TraceWriter",
]


class SimulationError(RuntimeError):
    """Base class for failures raised while a simulation is running."""


class ConsistencyError(SimulationError):
    """A kernel invariant was violated (missed threshold, Zeno loop, empty queue)."""


class EventKind(IntEnum):
    # value doubles as tie-break priority at equal timestamps
    THRESHOLD = 0
    TIMED = 1
    CLOCK = 2


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    name: str
    fired: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return "+".join((self.name,) + self.fired)


@dataclass
class LinearSegment:
    """Fluid trajectory between two events: ``level(t) = start + rate * (t - t0)``."""

    start_time: float
    levels: list[float]
    rates: list[float]

    def level_at(self, i: int, t: float) -> float:
        return self.levels[i] + self.rates[i] * (t - self.start_time)


# --------------------------------------------------------------------------
# sampling and immediate-transition resolution


def sample_exponential(rate: float, u: float) -> float:
    """Inverse-cdf exponential sample; ``NEVER`` when the rate is zero.

    ``u`` must lie in (0, 1]; with ``u = 1`` the sample is exactly 0.
    """
    if not 0.0 < u <= 1.0:
        raise ValueError(f"uniform variate {u!r} outside (0, 1]")
    if rate < 0.0:
        raise ValueError(f"negative rate {rate!r}")
    if rate == 0.0:
        return NEVER
    return -math.log(u) / rate + 0.0


def resolve_immediate_conflict(weights: Sequence[float], u: float) -> int:
    """Pick among conflicting immediate transitions by normalized weight.

    Returns the smallest index whose cumulative normalized weight exceeds ``u``.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"uniform variate {u!r} outside [0, 1)")
    total = 0.0
    for w in weights:
        if w < 0.0:
            raise ValueError(f"negative weight {w!r}")
        total += w
    if total <= 0.0:
        raise ValueError("no enabled immediate branch")
    acc = 0.0
    last = 0
    for i, w in enumerate(weights):
        if w > 0.0:
            acc += w / total
            last = i
            if u < acc:
                return i
    # u within rounding of 1: the last enabled branch owns the remainder
    return last


# --------------------------------------------------------------------------
# fluid primitives


def next_threshold_crossing(level: float, net_rate: float, capacity: float) -> float:
    """Time until ``level`` hits 0 or ``capacity`` at constant ``net_rate``.

    Returns 0 for a place already sitting on the boundary it moves into and
    ``NEVER`` for a constant level.
    """
    if net_rate < 0.0:
        if level <= EPS:
            return 0.0
        return level / -net_rate
    if net_rate > 0.0:
        if capacity == math.inf:
            return NEVER
        if level >= capacity - EPS:
            return 0.0
        return (capacity - level) / net_rate
    return NEVER


def _settle(level: float, capacity: float, index: int) -> float:
    if level < EPS:
        if level < -EPS:
            raise ConsistencyError(f"place {index} fell to {level!r} (missed threshold)")
        return 0.0
    if level > capacity - EPS:
        if level > capacity + EPS:
            raise ConsistencyError(
                f"place {index} rose to {level!r} above capacity {capacity!r} (missed threshold)"
            )
        return capacity
    return level


def advance_fluid(segment: LinearSegment, dt: float, capacities: Sequence[float]) -> list[float]:
    """Integrate a linear segment over ``dt`` and clamp onto [0, capacity].

    Raises :class:`ConsistencyError` if any level leaves its range by more
    than ``EPS`` (a threshold event must have been missed).
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    if dt == 0.0:
        return list(segment.levels)
    return [
        _settle(level + rate * dt, cap, i)
        for i, (level, rate, cap) in enumerate(zip(segment.levels, segment.rates, capacities))
    ]


def apply_fluid_jump(
    source_level: float, dest_level: float, dest_capacity: float, height: float
) -> Optional[tuple[float, float]]:
    """Move ``height`` units of fluid in zero time, or return None if it would cross a boundary."""
    if height <= 0.0:
        raise ValueError("jump height must be positive")
    if source_level + EPS < height or dest_level + height > dest_capacity + EPS:
        return None
    src = source_level - height
    dst = dest_level + height
    if src < EPS:
        src = 0.0
    if dst > dest_capacity - EPS:
        dst = dest_capacity
    return src, dst


# --------------------------------------------------------------------------
# random streams


def stream_generator(seed: int, name: str) -> np.random.Generator:
    """The numpy Generator behind the named sub-stream of ``seed``."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed {seed!r} is not a 64-bit unsigned integer")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


class RngStream:
    """Reproducible Unif[0,1) stream, one per named purpose.

    PCG64 is platform independent, so ``(seed, name)`` fixes the sequence.
    Draws are buffered in blocks because per-call numpy overhead dominates the
    simulation loop otherwise.
    """

    __slots__ = ("seed", "name", "_gen", "_buf", "_pos", "_block")

    def __init__(self, seed: int, name: str, block: int = 2048):
        self._gen = stream_generator(seed, name)
        self.seed = seed
        self.name = name
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def uniform(self) -> float:
        """Next variate in [0, 1)."""
        pos = self._pos
        if pos == len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def uniform_pos(self) -> float:
        """Next variate in (0, 1], suitable for ``-log(u)``."""
        return 1.0 - self.uniform()


# --------------------------------------------------------------------------
# event queue


class EventQueue:
    """Time-ordered queue with one live entry per target.

    Scheduling a target again supersedes its previous entry; superseded
    entries are dropped lazily when they reach the head.
    """

    def __init__(self):
        self._heap: list[tuple] = []
        self._live: dict[str, int] = {}
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._live)

    def __contains__(self, target: str) -> bool:
        return target in self._live

    def schedule(self, target: str, time: float, kind: EventKind, payload=None) -> None:
        if time == NEVER:
            self._live.pop(target, None)
            return
        seq = next(self._seq)
        self._live[target] = seq
        heapq.heappush(self._heap, (time, kind, seq, target, payload))

    def cancel(self, target: str) -> None:
        self._live.pop(target, None)

    def _clean(self) -> None:
        heap, live = self._heap, self._live
        while heap and live.get(heap[0][3]) != heap[0][2]:
            heapq.heappop(heap)

    def peek(self) -> Optional[tuple]:
        """(time, kind, seq, target, payload) of the earliest live entry, or None."""
        self._clean()
        return self._heap[0] if self._heap else None

    def peek_time(self) -> float:
        head = self.peek()
        return head[0] if head is not None else NEVER

    def pop(self) -> tuple:
        self._clean()
        if not self._heap:
            raise ConsistencyError("event queue is empty")
        entry = heapq.heappop(self._heap)
        del self._live[entry[3]]
        return entry


def reschedule_exponential(
    queue: EventQueue, target: str, new_rate: float, now: float, rng: RngStream
) -> float:
    """Replace the pending firing of an exponential transition after a rate change.

    A zero rate removes the entry.  Returns the new absolute firing time.
    """
    if new_rate == 0.0:
        queue.cancel(target)
        return NEVER
    t = now + sample_exponential(new_rate, rng.uniform_pos())
    queue.schedule(target, t, EventKind.TIMED)
    return t


# --------------------------------------------------------------------------
# the net


@dataclass
class _Counters:
    events: int = 0
    thresholds: int = 0
    coalesced_ticks: int = 0


class FluidNet:
    """Piecewise-linear fluid state plus the event loop that drives it.

    Subclasses set rates through :meth:`set_rates` and react to events in the
    ``on_*`` handlers.  A handler may return the names of immediate
    transitions it fired, which end up in the emitted :class:`Event`.
    """

    THRESHOLD_TARGET = "threshold"
    MAX_ZERO_LENGTH_THRESHOLDS = 64

    def __init__(
        self,
        names: Sequence[str],
        capacities: Sequence[float],
        levels: Sequence[float],
        clock_period: float = 1.0,
    ):
        if not (len(names) == len(capacities) == len(levels)):
            raise ValueError("names, capacities and levels must have equal length")
        self.place_names = tuple(names)
        self.capacities = [float(c) for c in capacities]
        self.levels = [_settle(float(l), c, i) for i, (l, c) in enumerate(zip(levels, self.capacities))]
        self.rates = [0.0] * len(self.levels)
        self.clock_period = clock_period
        self.now = 0.0
        self.cycle = 0
        self.next_tick = clock_period
        self.queue = EventQueue()
        self.absorbed = False
        self.trace: Optional[Callable[[Event, Sequence[float]], None]] = None
        self.observer: Optional[Callable[["FluidNet", Event, list[float]], None]] = None
        self.coalesce = True
        self.stats = _Counters()
        self._zero_hits = 0
        self._last_threshold_time = -1.0

    # -- handlers ---------------------------------------------------------

    def on_clock(self) -> tuple[str, ...]:
        return ()

    def on_timed(self, name: str) -> tuple[str, ...]:
        return ()

    def on_threshold(self, place: int) -> tuple[str, ...]:
        return ()

    def fire_immediate(self) -> tuple[str, ...]:
        """Fire immediate transitions left enabled after an event, to quiescence."""
        return ()

    def stationary_ticks(self) -> int:
        """Number of upcoming clock ticks that provably change nothing but levels.

        The default disables tick coalescing.
        """
        return 0

    # -- fluid ------------------------------------------------------------

    def segment(self) -> LinearSegment:
        return LinearSegment(self.now, list(self.levels), list(self.rates))

    def advance(self, t: float) -> list[float]:
        """Move fluid forward to time ``t``; returns the unclamped end levels."""
        dt = t - self.now
        if dt < 0.0:
            raise ConsistencyError(f"time moved backwards: {self.now!r} -> {t!r}")
        self.now = t
        if dt == 0.0:
            return self.levels
        caps = self.capacities
        raw = [l + r * dt for l, r in zip(self.levels, self.rates)]
        new = raw
        for i, x in enumerate(raw):
            if x < EPS or x > caps[i] - EPS:
                if new is raw:
                    new = raw[:]
                new[i] = _settle(x, caps[i], i)
        self.levels = new
        return raw

    def set_rates(self, rates: Sequence[float]) -> None:
        """Install new net rates starting at ``now`` and reschedule the threshold hit."""
        self.rates = list(rates)
        self._schedule_threshold()

    def jump(self, src: int, dst: int, height: float = 1.0) -> bool:
        """Zero-time fluid jump between two places; False if it would cross a boundary."""
        moved = apply_fluid_jump(self.levels[src], self.levels[dst], self.capacities[dst], height)
        if moved is None:
            return False
        self.levels[src], self.levels[dst] = moved
        self._schedule_threshold()
        return True

    def _schedule_threshold(self) -> None:
        # inlined next_threshold_crossing over all places; this is the hot path
        best = NEVER
        where = -1
        levels, caps = self.levels, self.capacities
        for i, rate in enumerate(self.rates):
            if rate < 0.0:
                level = levels[i]
                dt = level / -rate if level > EPS else 0.0
            elif rate > 0.0:
                cap = caps[i]
                if cap == NEVER:
                    continue
                level = levels[i]
                dt = (cap - level) / rate if level < cap - EPS else 0.0
            else:
                continue
            if dt < best:
                best, where = dt, i
        t = self.now + best
        # crossings landing on the next tick are handled by the tick itself
        if where < 0 or t >= self.next_tick - EPS:
            self.queue.cancel(self.THRESHOLD_TARGET)
        else:
            self.queue.schedule(self.THRESHOLD_TARGET, t, EventKind.THRESHOLD, where)

    # -- event loop -------------------------------------------------------

    def step(self) -> Event:
        """Process the earliest pending event and return it."""
        time, kind, name, fired, raw = self._dispatch()
        event = Event(time, kind, name, tuple(fired))
        if self.observer is not None:
            self.observer(self, event, raw)
        if self.trace is not None:
            self.trace(event, self.levels)
        return event

    def _dispatch(self):
        if self.absorbed:
            raise SimulationError("net is absorbed; no further events")
        self.stats.events += 1
        head = self.queue.peek()
        if head is not None and head[0] <= self.next_tick:
            time, kind, _, target, payload = self.queue.pop()
            raw = self.advance(time)
            if kind == EventKind.THRESHOLD:
                self.stats.thresholds += 1
                if time == self._last_threshold_time:
                    self._zero_hits += 1
                    if self._zero_hits > self.MAX_ZERO_LENGTH_THRESHOLDS:
                        raise ConsistencyError(f"threshold loop at t={time!r} on place {payload}")
                else:
                    self._zero_hits = 0
                    self._last_threshold_time = time
                fired = self.on_threshold(payload)
                return time, kind, "THRESHOLD:" + self.place_names[payload], fired + self.fire_immediate(), raw
            fired = self.on_timed(target)
            return time, kind, target, fired + self.fire_immediate(), raw
        time = self.next_tick
        if time == NEVER:
            raise ConsistencyError("event queue is empty")
        raw = self.advance(time)
        self.cycle += 1
        self.next_tick = time + self.clock_period
        fired = self.on_clock()
        if self.absorbed:
            self.next_tick = NEVER
            self.queue.cancel(self.THRESHOLD_TARGET)
        else:
            fired = fired + self.fire_immediate()
        return time, EventKind.CLOCK, "T_CLOCK", fired, raw

    def _coalesce_ticks(self) -> bool:
        k = self.stationary_ticks()
        if k <= 0:
            return False
        horizon = self.queue.peek_time()
        if horizon != NEVER:
            k = min(k, math.ceil((horizon - self.next_tick) / self.clock_period))
        if k <= 0:
            return False
        last = self.next_tick + (k - 1) * self.clock_period
        self.advance(last)
        self.cycle += k
        self.next_tick = last + self.clock_period
        self.stats.events += k
        self.stats.coalesced_ticks += k
        return True

    def run(self, max_events: int = 10**9, max_cycles: Optional[int] = None) -> None:
        """Step until absorption, coalescing idle ticks when no trace/observer is attached."""
        fast = self.coalesce and self.trace is None and self.observer is None
        stats = self.stats
        while not self.absorbed:
            if stats.events >= max_events:
                raise SimulationError(f"event cap {max_events} reached at t={self.now!r}")
            if max_cycles is not None and self.cycle > max_cycles:
                raise SimulationError(f"cycle cap {max_cycles} exceeded at t={self.now!r}")
            if fast:
                if not self._coalesce_ticks():
                    self._dispatch()
            else:
                self.step()


def step(state: FluidNet) -> Event:
    """Functional alias for :meth:`FluidNet.step`."""
    return state.step()


def format_trace_line(event: Event, levels: Sequence[float]) -> str:
    """``time<TAB>kind<TAB>name<TAB>level...``; floats in shortest round-trip form."""
    cols = [repr(float(event.time)), event.kind.name.lower(), event.label]
    cols.extend(repr(float(x)) for x in levels)
    return "\t".join(cols)


class TraceWriter:
    """Trace hook writing one line per event to a text stream, after a header."""

    def __init__(self, stream, place_names: Sequence[str]):
        self.stream = stream
        self.lines = 0
        stream.write("\t".join(["time", "kind", "name", *place_names]) + "\n")

    def __call__(self, event: Event, levels: Sequence[float]) -> None:
        self.stream.write(format_trace_line(event, levels) + "\n")
        self.lines += 1

"""Deterministic discrete-event engine.

Time is integer seconds. Events are ordered by ``(time, sequence)`` where the
sequence comes from a monotone insertion counter, so the processing order is a
pure function of what was scheduled and when.

Processing happens one *instant* at a time. Before an instant ``t`` is
processed, registered sources may inject events at ``t`` (this is how trace
arrivals enter). After every event at ``t`` has been handled, the instant hooks
run; they may start jobs or schedule further events at ``t``, in which case the
instant is drained again.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .errors import CorruptLog, SchedulingInPast


class EventKind(str, enum.Enum):
    JOB_ARRIVAL = "JobArrival"
    JOB_START = "JobStart"
    JOB_END = "JobEnd"
    VM_STAGE_COMPLETE = "VmStageComplete"
    AUTOSCALE_TICK = "AutoscaleTick"
    CANCEL_REQUEST = "CancelRequest"


@dataclass
class SimEvent:
    time: int
    sequence: int
    kind: EventKind
    payload: dict = field(default_factory=dict)

    def sort_key(self) -> tuple[int, int]:
        return (self.time, self.sequence)

    def __lt__(self, other: "SimEvent") -> bool:
        return self.sort_key() < other.sort_key()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class LogEntry:
    t: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return canonical_json({"t": self.t, "kind": self.kind, "payload": self.payload})

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.payload).encode()).hexdigest()[:16]


class EventLog:
    """Append-only record of processed events, in processing order."""

    def __init__(self, entries: Iterable[LogEntry] = ()):
        self._entries: list[LogEntry] = list(entries)

    def append(self, t: int, kind: str, payload: dict) -> LogEntry:
        entry = LogEntry(t, kind, payload)
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LogEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self._entries)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entry = LogEntry(int(obj["t"]), str(obj["kind"]), dict(obj["payload"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptLog(f"line {lineno}: {exc}") from exc
            if entries and entry.t < entries[-1].t:
                raise CorruptLog(f"line {lineno}: time goes backwards")
            entries.append(entry)
        return cls(entries)

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def seeded_rng(seed: int) -> random.Random:
    """Return the reproducible random stream for ``seed`` (unsigned 64-bit)."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return random.Random(seed)


Handler = Callable[[SimEvent], None]


class Engine:
    def __init__(self, seed: int = 0):
        self.clock = 0
        self.seed = seed
        self.rng = seeded_rng(seed)
        self.log = EventLog()
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._handlers: dict[EventKind, Handler] = {}
        self._sources: list = []
        self._instant_hooks: list[Callable[[int], None]] = []
        self.events_processed = 0

    # wiring

    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def add_source(self, source) -> None:
        """Register an object with ``next_time() -> int | None`` and ``inject(t)``."""
        self._sources.append(source)

    def add_instant_hook(self, hook: Callable[[int], None]) -> None:
        self._instant_hooks.append(hook)

    # scheduling

    def schedule(self, time: int, kind: EventKind, payload: dict | None = None) -> SimEvent:
        if time < self.clock:
            raise SchedulingInPast(f"event at t={time} scheduled when clock={self.clock}")
        event = SimEvent(int(time), self._seq, EventKind(kind), payload or {})
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def fire(self, kind: EventKind, payload: dict) -> LogEntry:
        """Record an instantaneous state change at the current clock."""
        self._seq += 1
        return self.log.append(self.clock, EventKind(kind).value, payload)

    def peek_time(self) -> int | None:
        return self._queue[0].time if self._queue else None

    def pending_events(self) -> int:
        return len(self._queue)

    def _next_instant(self) -> int | None:
        times = [self._queue[0].time] if self._queue else []
        for src in self._sources:
            nt = src.next_time()
            if nt is not None:
                times.append(nt)
        return min(times) if times else None

    def _process_instant(self, t: int) -> None:
        while True:
            while self._queue and self._queue[0].time == t:
                event = heapq.heappop(self._queue)
                self.log.append(t, event.kind.value, event.payload)
                self.events_processed += 1
                handler = self._handlers.get(event.kind)
                if handler is not None:
                    handler(event)
            for hook in self._instant_hooks:
                hook(t)
            if not (self._queue and self._queue[0].time == t):
                return

    def run_until(self, t_end: int) -> EventLog:
        """Process every event with ``time <= t_end`` and leave the clock at ``t_end``."""
        if t_end < self.clock:
            raise SchedulingInPast(f"run_until({t_end}) with clock={self.clock}")
        while True:
            t = self._next_instant()
            if t is None or t > t_end:
                break
            self.clock = t
            for src in self._sources:
                if src.next_time() == t:
                    src.inject(t)
            self._process_instant(t)
        self.clock = t_end
        return self.log

    def advance_to(self, t: int) -> None:
        """Process events strictly before ``t``; events at ``t`` stay queued."""
        if t < self.clock:
            raise SchedulingInPast(f"advance_to({t}) with clock={self.clock}")
        if t > self.clock:
            self.run_until(t - 1)
            self.clock = t

    def step(self) -> bool:
        """Process the next instant. Returns False when nothing is left."""
        t = self._next_instant()
        if t is None:
            return False
        self.run_until(max(t, self.clock))
        return True

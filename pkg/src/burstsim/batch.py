"""Queue entries and the FCFS + EASY-backfill scheduler shared by both clusters.

A cluster subclass supplies capacity: which partitions exist, how many nodes
are free in each, what comes back when (releases), and how nodes are bound to
an entry. Everything about queue order and state transitions lives here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from . import kernels
from .errors import IllegalTransition, JobTooLarge
from .workload import AppProfile, Job, runtime_on


class EntryState(str, enum.Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    FINISHED = "Finished"
    CANCELLED = "Cancelled"
    WALLTIME_KILLED = "WalltimeKilled"


_ALLOWED = {
    EntryState.PENDING: {EntryState.RUNNING, EntryState.CANCELLED},
    EntryState.RUNNING: {EntryState.FINISHED, EntryState.WALLTIME_KILLED},
}

TERMINAL = frozenset({EntryState.FINISHED, EntryState.CANCELLED, EntryState.WALLTIME_KILLED})
COMPLETED = frozenset({EntryState.FINISHED, EntryState.WALLTIME_KILLED})


@dataclass(eq=False)
class QueueEntry:
    job: Job
    cluster: str
    partition: str
    enqueue_time: int
    order: int
    state: EntryState = EntryState.PENDING
    start_time: int | None = None
    end_time: int | None = None
    assigned_nodes: int = 0
    vm_ids: list[int] = field(default_factory=list)
    runtime_s: int | None = None

    @property
    def job_id(self) -> str:
        return self.job.id

    def transition(self, new: EntryState) -> None:
        if new not in _ALLOWED.get(self.state, ()):
            raise IllegalTransition(f"job {self.job.id} on {self.cluster}: {self.state.value} -> {new.value}")
        self.state = new

    @property
    def walltime_end(self) -> int:
        assert self.start_time is not None
        return self.start_time + self.job.req_walltime_s

    @property
    def expected_end(self) -> int:
        assert self.start_time is not None and self.runtime_s is not None
        return self.start_time + self.runtime_s


class BatchScheduler:
    """FCFS queue per partition with optional EASY backfill."""

    kind = "hpc"

    def __init__(self, name: str, apps: Mapping[str, AppProfile], backfill_enabled: bool = True):
        self.name = name
        self.apps = apps
        self.backfill_enabled = backfill_enabled
        self.entries: dict[str, QueueEntry] = {}
        self.queues: dict[str, list[QueueEntry]] = {}
        self._order = 0

    # capacity hooks for subclasses

    def partition_for(self, job: Job) -> str:
        raise NotImplementedError

    def capacity(self, partition: str) -> int:
        raise NotImplementedError

    def free_nodes(self, partition: str) -> int:
        raise NotImplementedError

    def releases(self, partition: str) -> tuple[list[int], list[int]]:
        raise NotImplementedError

    def _bind(self, entry: QueueEntry) -> None:
        raise NotImplementedError

    def _unbind(self, entry: QueueEntry) -> None:
        raise NotImplementedError

    def runtime(self, job: Job) -> int:
        return runtime_on(job, self.kind, self.apps)

    # queue operations

    def submit(self, job: Job, t: int) -> QueueEntry:
        partition = self.partition_for(job)
        if job.nodes > self.capacity(partition):
            raise JobTooLarge(
                f"job {job.id} needs {job.nodes} nodes; {self.name}/{partition} has {self.capacity(partition)}"
            )
        if job.id in self.entries:
            raise ValueError(f"job {job.id} already submitted to {self.name}")
        entry = QueueEntry(job, self.name, partition, t, self._order)
        self._order += 1
        self.entries[job.id] = entry
        self.queues.setdefault(partition, []).append(entry)
        return entry

    def pending(self, partition: str | None = None) -> list[QueueEntry]:
        if partition is None:
            return [e for q in self.queues.values() for e in q]
        return list(self.queues.get(partition, ()))

    def running(self) -> list[QueueEntry]:
        return [e for e in self.entries.values() if e.state is EntryState.RUNNING]

    def try_schedule(self, t: int) -> list[QueueEntry]:
        started: list[QueueEntry] = []
        for partition in sorted(self.queues):
            queue = self.queues[partition]
            if not queue:
                continue
            rel_t, rel_n = self.releases(partition)
            idx = kernels.easy_pass(
                t,
                self.free_nodes(partition),
                rel_t,
                rel_n,
                [e.job.nodes for e in queue],
                [e.job.req_walltime_s for e in queue],
                self.backfill_enabled,
            )
            if not idx:
                continue
            chosen = [queue[i] for i in idx]
            picked = set(idx)
            self.queues[partition] = [e for i, e in enumerate(queue) if i not in picked]
            for entry in chosen:
                self._start(entry, t)
                started.append(entry)
        return started

    def _start(self, entry: QueueEntry, t: int) -> None:
        entry.transition(EntryState.RUNNING)
        entry.start_time = t
        entry.assigned_nodes = entry.job.nodes
        entry.runtime_s = self.runtime(entry.job)
        self._bind(entry)

    def finish(self, entry: QueueEntry, t: int, reschedule: bool = True) -> list[QueueEntry]:
        """Complete a running entry at ``t``; returns entries started by the follow-up pass."""
        if entry.state is not EntryState.RUNNING:
            raise IllegalTransition(f"finish on {entry.state.value} job {entry.job.id}")
        if t != entry.expected_end:
            raise IllegalTransition(f"job {entry.job.id} ends at {entry.expected_end}, not {t}")
        killed = self._uncapped_runtime(entry.job) > entry.job.req_walltime_s
        entry.transition(EntryState.WALLTIME_KILLED if killed else EntryState.FINISHED)
        entry.end_time = t
        self._unbind(entry)
        return self.try_schedule(t) if reschedule else []

    def _uncapped_runtime(self, job: Job) -> int:
        profile = self.apps[job.app]
        if self.kind == "hpc":
            return job.base_runtime_s
        return -(-job.base_runtime_s * profile.cloud_slowdown.numerator // profile.cloud_slowdown.denominator)

    def cancel(self, job_id: str, t: int) -> bool:
        entry = self.entries.get(job_id)
        if entry is None or entry.state is not EntryState.PENDING:
            return False
        entry.transition(EntryState.CANCELLED)
        entry.end_time = t
        self.queues[entry.partition].remove(entry)
        return True

    def estimate_start(self, job: Job, t: int) -> int | None:
        """Start time ``job`` would get if submitted now, under walltime bounds.

        Returns None when the job could never start with the capacity in sight.
        """
        partition = self.partition_for(job)
        if job.nodes > self.capacity(partition):
            raise JobTooLarge(f"job {job.id} needs {job.nodes} nodes; {self.name}/{partition} has {self.capacity(partition)}")
        queue = self.queues.get(partition, [])
        rel_t, rel_n = self.releases(partition)
        rel_t, rel_n = self._extra_releases(partition, rel_t, rel_n)
        starts = kernels.project_starts(
            t,
            self.free_nodes(partition),
            rel_t,
            rel_n,
            [e.job.nodes for e in queue] + [job.nodes],
            [e.job.req_walltime_s for e in queue] + [job.req_walltime_s],
            self.backfill_enabled,
        )
        start = starts[-1]
        return None if start < 0 else start

    def _extra_releases(self, partition, rel_t, rel_n):
        return rel_t, rel_n

    def pending_demand(self) -> int:
        return sum(e.job.nodes for e in self.pending())

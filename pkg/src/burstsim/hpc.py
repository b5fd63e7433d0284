"""Fixed-capacity HPC cluster with per-partition FCFS + EASY backfill."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .batch import BatchScheduler, EntryState, QueueEntry
from .errors import ConfigError, InvariantViolation
from .workload import AppProfile, Job

DEFAULT_PARTITION = "default"


@dataclass
class HpcConfig:
    name: str = "stampede2"
    total_nodes: int = 5936
    cores_per_node: int = 48
    partitions: dict[str, int] = field(default_factory=lambda: {"knl": 4200, "skx": 1736})
    backfill_enabled: bool = True
    default_partition: str | None = "skx"

    def __post_init__(self):
        if self.total_nodes <= 0 or self.cores_per_node <= 0:
            raise ConfigError("hpc total_nodes and cores_per_node must be positive")
        if any(n <= 0 for n in self.partitions.values()):
            raise ConfigError("hpc partition sizes must be positive")
        if sum(self.partitions.values()) > self.total_nodes:
            raise ConfigError(
                f"hpc partitions sum to {sum(self.partitions.values())} > total_nodes {self.total_nodes}"
            )
        if self.partitions:
            if self.default_partition is None:
                self.default_partition = next(iter(self.partitions))
            if self.default_partition not in self.partitions:
                raise ConfigError(f"default partition {self.default_partition!r} not defined")
        else:
            self.default_partition = DEFAULT_PARTITION

    def partition_sizes(self) -> dict[str, int]:
        return dict(self.partitions) if self.partitions else {DEFAULT_PARTITION: self.total_nodes}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HpcConfig":
        known = {"name", "total_nodes", "cores_per_node", "partitions", "backfill_enabled", "default_partition"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hpc keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "partitions" in kwargs:
            kwargs["partitions"] = {str(k): int(v) for k, v in (kwargs["partitions"] or {}).items()}
        return cls(**kwargs)


class HpcCluster(BatchScheduler):
    kind = "hpc"

    def __init__(self, config: HpcConfig, apps: Mapping[str, AppProfile]):
        super().__init__(config.name, apps, config.backfill_enabled)
        self.config = config
        self._sizes = config.partition_sizes()
        self._used = {p: 0 for p in self._sizes}

    def partition_for(self, job: Job) -> str:
        if job.partition is not None and job.partition in self._sizes:
            return job.partition
        return self.config.default_partition

    def capacity(self, partition: str) -> int:
        return self._sizes[partition]

    def free_nodes(self, partition: str) -> int:
        return self._sizes[partition] - self._used[partition]

    def releases(self, partition: str) -> tuple[list[int], list[int]]:
        rel_t, rel_n = [], []
        for e in self.entries.values():
            if e.state is EntryState.RUNNING and e.partition == partition:
                rel_t.append(e.walltime_end)
                rel_n.append(e.assigned_nodes)
        return rel_t, rel_n

    def _bind(self, entry: QueueEntry) -> None:
        self._used[entry.partition] += entry.assigned_nodes

    def _unbind(self, entry: QueueEntry) -> None:
        self._used[entry.partition] -= entry.assigned_nodes

    def used_nodes(self) -> int:
        return sum(self._used.values())

    def check_invariants(self, t: int) -> None:
        busy: dict[str, int] = {p: 0 for p in self._sizes}
        for e in self.entries.values():
            if e.state is EntryState.RUNNING:
                busy[e.partition] += e.assigned_nodes
                if t > e.walltime_end:
                    raise InvariantViolation(f"{self.name}: job {e.job.id} running past its walltime at t={t}")
        for p, n in busy.items():
            if n > self._sizes[p] or n != self._used[p]:
                raise InvariantViolation(f"{self.name}/{p}: {n} nodes busy, capacity {self._sizes[p]}")
        if sum(busy.values()) > self.config.total_nodes:
            raise InvariantViolation(f"{self.name}: node capacity exceeded")

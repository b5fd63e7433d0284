"""Elastic cloud cluster: hosts, VM lifecycle, placement, autoscaling.

One Ready VM is one schedulable node. VMs go through a fixed provisioning
pipeline whose stage durations come from configuration; each stage completion
is a ``VmStageComplete`` event, so the time to Ready is exactly the sum of the
configured latencies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .batch import BatchScheduler, EntryState, QueueEntry
from .engine import Engine, EventKind, SimEvent
from .errors import AboveMax, ConfigError, IllegalTransition, InvariantViolation, PoolExhausted
from .workload import AppProfile, Job, parse_ratio

PARTITION = "default"


class VmState(str, enum.Enum):
    REQUESTED = "Requested"
    BOOTING = "Booting"
    UPDATING = "Updating"
    INSTALLING_PACKAGES = "InstallingPackages"
    MOUNTING_FILESYSTEMS = "MountingFilesystems"
    CONFIGURING_SCHEDULER = "ConfiguringScheduler"
    CONFIGURING_IDENTITY = "ConfiguringIdentity"
    READY = "Ready"
    BUSY = "Busy"
    DRAINING = "Draining"
    TERMINATED = "Terminated"


_ORDER = {s: i for i, s in enumerate(VmState)}
PROVISIONING = frozenset(
    {
        VmState.REQUESTED,
        VmState.BOOTING,
        VmState.UPDATING,
        VmState.INSTALLING_PACKAGES,
        VmState.MOUNTING_FILESYSTEMS,
        VmState.CONFIGURING_SCHEDULER,
        VmState.CONFIGURING_IDENTITY,
    }
)

# stage name -> state the VM is in while the stage runs
STAGES: tuple[tuple[str, VmState], ...] = (
    ("boot", VmState.BOOTING),
    ("update", VmState.UPDATING),
    ("packages", VmState.INSTALLING_PACKAGES),
    ("mounts", VmState.MOUNTING_FILESYSTEMS),
    ("scheduler", VmState.CONFIGURING_SCHEDULER),
    ("identity", VmState.CONFIGURING_IDENTITY),
)
STAGE_NAMES = tuple(name for name, _ in STAGES)
DEFAULT_STAGE_LATENCIES = {"boot": 60, "update": 120, "packages": 90, "mounts": 15, "scheduler": 20, "identity": 10}


@dataclass
class CloudConfig:
    name: str = "jetstream"
    host_count: int = 320
    vcpus_per_host: int = 48
    oversubscription: Fraction = Fraction(1)
    vm_vcpus: int = 2
    stage_latencies_s: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_STAGE_LATENCIES))
    min_vms: int = 8
    max_vms: int = 8
    initial_vms: int | None = None
    persistent_master: bool = True
    persistent_login: bool = True
    backfill_enabled: bool = True

    def __post_init__(self):
        self.oversubscription = parse_ratio(self.oversubscription)
        if self.host_count <= 0 or self.vcpus_per_host <= 0:
            raise ConfigError("cloud host_count and vcpus_per_host must be positive")
        if self.oversubscription < 1:
            raise ConfigError("cloud oversubscription must be >= 1")
        if not 1 <= self.vm_vcpus <= 44:
            raise ConfigError("cloud vm_vcpus must be within [1, 44]")
        if set(self.stage_latencies_s) != set(STAGE_NAMES):
            raise ConfigError(f"cloud stage_latencies_s must define exactly {list(STAGE_NAMES)}")
        if any(int(v) < 0 for v in self.stage_latencies_s.values()):
            raise ConfigError("cloud stage latencies must be >= 0")
        self.stage_latencies_s = {k: int(self.stage_latencies_s[k]) for k in STAGE_NAMES}
        if self.min_vms < 0 or self.min_vms > self.max_vms:
            raise ConfigError("cloud requires 0 <= min_vms <= max_vms")
        if self.max_vms > self.pool_limit:
            raise ConfigError(f"cloud max_vms {self.max_vms} exceeds pool limit {self.pool_limit}")
        if self.initial_vms is None:
            self.initial_vms = self.min_vms
        if not self.min_vms <= self.initial_vms <= self.max_vms:
            raise ConfigError("cloud initial_vms must lie within [min_vms, max_vms]")

    @property
    def host_vcpu_capacity(self) -> Fraction:
        return self.vcpus_per_host * self.oversubscription

    @property
    def vms_per_host(self) -> int:
        return math.floor(self.host_vcpu_capacity / self.vm_vcpus)

    @property
    def pool_limit(self) -> int:
        return self.host_count * self.vms_per_host

    @property
    def provisioning_latency(self) -> int:
        return sum(self.stage_latencies_s.values())

    @classmethod
    def from_dict(cls, d: Mapping) -> "CloudConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown cloud keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "stage_latencies_s" in kwargs:
            kwargs["stage_latencies_s"] = {str(k): int(v) for k, v in kwargs["stage_latencies_s"].items()}
        return cls(**kwargs)


@dataclass
class AutoscalerConfig:
    enabled: bool = False
    interval_s: int = 60
    headroom_factor: float = 1.0
    cooldown_s: int = 600

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ConfigError("autoscaler interval_s must be positive")
        if self.headroom_factor <= 0:
            raise ConfigError("autoscaler headroom_factor must be positive")
        if self.cooldown_s < 0:
            raise ConfigError("autoscaler cooldown_s must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "AutoscalerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown autoscaler keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(eq=False)
class VmInstance:
    id: int
    host_id: int
    state: VmState
    stage_entered_at: int
    requested_at: int
    ready_at: int
    entry: QueueEntry | None = None

    def advance(self, new: VmState, t: int) -> None:
        ok = _ORDER[new] > _ORDER[self.state] or (self.state is VmState.BUSY and new is VmState.READY)
        if not ok:
            raise IllegalTransition(f"vm {self.id}: {self.state.value} -> {new.value}")
        self.state = new
        self.stage_entered_at = t

    @property
    def alive(self) -> bool:
        return self.state is not VmState.TERMINATED


class CloudCluster(BatchScheduler):
    kind = "cloud"

    def __init__(self, config: CloudConfig, apps: Mapping[str, AppProfile], engine: Engine):
        super().__init__(config.name, apps, config.backfill_enabled)
        self.config = config
        self.engine = engine
        self.vms: dict[int, VmInstance] = {}
        self.host_used: list[int] = [0] * config.host_count
        self.persistent = [r for r, on in (("master", config.persistent_master), ("login", config.persistent_login)) if on]
        self._next_vm = 0
        self.last_scale_up: int | None = None
        engine.on(EventKind.VM_STAGE_COMPLETE, self._on_stage_event)
        for _ in range(config.initial_vms):
            vm = self._place(engine.clock)
            vm.ready_at = engine.clock
            engine.schedule(engine.clock, EventKind.VM_STAGE_COMPLETE, {"vm": vm.id, "host": vm.host_id, "stage": "initial", "state": VmState.READY.value})

    # placement and lifecycle

    def _first_fit(self, n: int) -> list[int] | None:
        used = list(self.host_used)
        cap = self.config.host_vcpu_capacity
        hosts = []
        h = 0
        for _ in range(n):
            while h < len(used) and used[h] + self.config.vm_vcpus > cap:
                h += 1
            if h == len(used):
                return None
            used[h] += self.config.vm_vcpus
            hosts.append(h)
        return hosts

    def _place(self, t: int, host: int | None = None) -> VmInstance:
        if host is None:
            hosts = self._first_fit(1)
            if hosts is None:
                raise PoolExhausted("no host can fit another VM")
            host = hosts[0]
        self.host_used[host] += self.config.vm_vcpus
        vm = VmInstance(self._next_vm, host, VmState.REQUESTED, t, t, t + self.config.provisioning_latency)
        self._next_vm += 1
        self.vms[vm.id] = vm
        return vm

    def vm_count(self) -> int:
        return sum(1 for vm in self.vms.values() if vm.alive)

    def vms_in(self, *states: VmState) -> list[VmInstance]:
        return [vm for vm in self.vms.values() if vm.state in states]

    def idle_vms(self) -> list[VmInstance]:
        return self.vms_in(VmState.READY)

    def provisioning_vms(self) -> list[VmInstance]:
        return [vm for vm in self.vms.values() if vm.state in PROVISIONING]

    def scale_up(self, n: int, t: int) -> list[VmInstance]:
        if n <= 0:
            return []
        if self.vm_count() + n > self.config.max_vms:
            raise AboveMax(f"{self.vm_count()} + {n} VMs exceeds max_vms {self.config.max_vms}")
        hosts = self._first_fit(n)
        if hosts is None:
            raise PoolExhausted(f"cannot place {n} VMs")
        vms = [self._place(t, h) for h in hosts]
        for vm in vms:
            self.engine.schedule(t, EventKind.VM_STAGE_COMPLETE, {"vm": vm.id, "host": vm.host_id, "stage": "requested", "state": VmState.BOOTING.value})
        self.last_scale_up = t
        return vms

    def placeable(self) -> int:
        """How many more VMs fit, by count limit and host capacity."""
        room = self.config.max_vms - self.vm_count()
        free_slots = sum(
            int((self.config.host_vcpu_capacity - used) // self.config.vm_vcpus) for used in self.host_used
        )
        return max(0, min(room, free_slots))

    def _on_stage_event(self, event: SimEvent) -> None:
        vm = self.vms[event.payload["vm"]]
        stage = event.payload["stage"]
        t = event.time
        if not vm.alive:
            event.payload["ignored"] = True
            return
        if stage == "initial":
            vm.advance(VmState.READY, t)
            return
        if stage == "requested":
            nxt_stage, nxt_state = STAGES[0]
            vm.advance(nxt_state, t)
        else:
            names = STAGE_NAMES
            i = names.index(stage)
            if i + 1 < len(STAGES):
                nxt_stage, nxt_state = STAGES[i + 1]
                vm.advance(nxt_state, t)
            else:
                vm.advance(VmState.READY, t)
                return
        self.engine.schedule(
            t + self.config.stage_latencies_s[nxt_stage],
            EventKind.VM_STAGE_COMPLETE,
            {"vm": vm.id, "stage": nxt_stage, "state": _state_after(nxt_stage).value},
        )

    def _terminate(self, vm: VmInstance, t: int) -> None:
        vm.advance(VmState.TERMINATED, t)
        self.host_used[vm.host_id] -= self.config.vm_vcpus
        self.engine.fire(EventKind.VM_STAGE_COMPLETE, {"vm": vm.id, "stage": "terminate", "state": VmState.TERMINATED.value})

    def scale_down(self, n: int, t: int) -> int:
        active = [vm for vm in self.vms.values() if vm.alive and vm.state is not VmState.DRAINING]
        budget = min(n, len(active) - self.config.min_vms)
        if budget <= 0:
            return 0
        by_newest = sorted(active, key=lambda vm: -vm.id)
        ordered = (
            [vm for vm in by_newest if vm.state is VmState.READY]
            + [vm for vm in by_newest if vm.state in PROVISIONING]
            + [vm for vm in by_newest if vm.state is VmState.BUSY]
        )
        removed = 0
        for vm in ordered[:budget]:
            if vm.state is VmState.BUSY:
                vm.advance(VmState.DRAINING, t)
                self.engine.fire(EventKind.VM_STAGE_COMPLETE, {"vm": vm.id, "stage": "drain", "state": VmState.DRAINING.value})
            else:
                self._terminate(vm, t)
            removed += 1
        return removed

    # scheduler capacity hooks

    def partition_for(self, job: Job) -> str:
        return PARTITION

    def capacity(self, partition: str) -> int:
        return self.config.max_vms

    def free_nodes(self, partition: str) -> int:
        return len(self.idle_vms())

    def releases(self, partition: str) -> tuple[list[int], list[int]]:
        rel_t, rel_n = [], []
        for e in self.entries.values():
            if e.state is EntryState.RUNNING:
                n = sum(1 for v in e.vm_ids if self.vms[v].state is VmState.BUSY)
                if n:
                    rel_t.append(e.walltime_end)
                    rel_n.append(n)
        for vm in self.provisioning_vms():
            rel_t.append(vm.ready_at)
            rel_n.append(1)
        return rel_t, rel_n

    def _bind(self, entry: QueueEntry) -> None:
        idle = sorted(self.idle_vms(), key=lambda vm: vm.id)[: entry.job.nodes]
        if len(idle) < entry.job.nodes:
            raise InvariantViolation(f"{self.name}: job {entry.job.id} started without enough Ready VMs")
        for vm in idle:
            vm.advance(VmState.BUSY, self.engine.clock)
            vm.entry = entry
        entry.vm_ids = [vm.id for vm in idle]

    def _unbind(self, entry: QueueEntry) -> None:
        t = entry.end_time
        for vid in entry.vm_ids:
            vm = self.vms[vid]
            vm.entry = None
            if vm.state is VmState.DRAINING:
                self._terminate(vm, t)
            else:
                vm.advance(VmState.READY, t)

    def estimate_start(self, job: Job, t: int, assume_scale_up: bool = False) -> int | None:
        """Like the HPC estimate; ``assume_scale_up`` adds the VMs an autoscaler
        would request now for this job's shortfall, Ready one provisioning
        latency from ``t``."""
        self._hypothetical = (0, t)
        if assume_scale_up:
            supply = len(self.idle_vms()) + len(self.provisioning_vms())
            self._hypothetical = (min(self.placeable(), max(0, job.nodes - supply)), t)
        try:
            return super().estimate_start(job, t)
        finally:
            self._hypothetical = (0, t)

    def _extra_releases(self, partition, rel_t, rel_n):
        k, t = getattr(self, "_hypothetical", (0, 0))
        if k:
            rel_t = rel_t + [t + self.config.provisioning_latency]
            rel_n = rel_n + [k]
        return rel_t, rel_n

    def check_invariants(self, t: int) -> None:
        cap = self.config.host_vcpu_capacity
        per_host = [0] * self.config.host_count
        for vm in self.vms.values():
            if vm.alive:
                per_host[vm.host_id] += self.config.vm_vcpus
        for h, used in enumerate(per_host):
            if used > cap or used != self.host_used[h]:
                raise InvariantViolation(f"{self.name}: host {h} has {used} vCPUs, capacity {cap}")
        count = self.vm_count()
        if not self.config.min_vms <= count <= self.config.max_vms:
            raise InvariantViolation(
                f"{self.name}: {count} VMs outside [{self.config.min_vms}, {self.config.max_vms}] at t={t}"
            )
        for e in self.entries.values():
            if e.state is EntryState.RUNNING:
                for vid in e.vm_ids:
                    if self.vms[vid].state not in (VmState.BUSY, VmState.DRAINING):
                        raise InvariantViolation(f"{self.name}: job {e.job.id} on VM {vid} in {self.vms[vid].state.value}")
                if t > e.walltime_end:
                    raise InvariantViolation(f"{self.name}: job {e.job.id} running past its walltime")


def _state_after(stage: str) -> VmState:
    i = STAGE_NAMES.index(stage)
    return STAGES[i + 1][1] if i + 1 < len(STAGES) else VmState.READY


@dataclass
class ScaleAction:
    kind: str  # "up" | "down" | "hold"
    n: int
    target: int
    demand: int

    def to_dict(self) -> dict:
        return {"action": self.kind, "n": self.n, "target": self.target, "demand": self.demand}


class Autoscaler:
    """Keeps idle supply (Ready-idle plus provisioning VMs) near pending demand."""

    def __init__(self, config: AutoscalerConfig, cloud: CloudCluster):
        self.config = config
        self.cloud = cloud

    def target(self) -> tuple[int, int]:
        demand = self.cloud.pending_demand()
        cfg = self.cloud.config
        target = math.ceil(Fraction(str(self.config.headroom_factor)) * demand)
        return max(cfg.min_vms, min(cfg.max_vms, target)), demand

    def supply(self) -> int:
        return len(self.cloud.idle_vms()) + len(self.cloud.provisioning_vms())

    def tick(self, t: int) -> ScaleAction:
        target, demand = self.target()
        supply = self.supply()
        if target > supply:
            n = min(target - supply, self.cloud.placeable())
            if n > 0:
                self.cloud.scale_up(n, t)
                return ScaleAction("up", n, target, demand)
        elif target < supply:
            last = self.cloud.last_scale_up
            if last is None or t - last >= self.config.cooldown_s:
                n = self.cloud.scale_down(supply - target, t)
                if n:
                    return ScaleAction("down", n, target, demand)
        return ScaleAction("hold", 0, target, demand)

    def quiescent(self) -> bool:
        target, _ = self.target()
        return target == self.supply() or (target > self.supply() and self.cloud.placeable() == 0)

"""Wires engine, clusters, autoscaler and router into one simulation instance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from . import metrics
from .batch import EntryState, QueueEntry
from .cloud import Autoscaler, AutoscalerConfig, CloudCluster, CloudConfig
from .engine import Engine, EventKind, EventLog, SimEvent
from .errors import InvariantViolation, JobTooLarge, UnroutableJob
from .hpc import HpcCluster, HpcConfig
from .router import FederationRouter, Policy, WaitTable
from .workload import CLOUD, HPC, AppProfile, Job, Trace


class _TraceFeeder:
    """Injects trace arrivals into the engine one instant at a time."""

    def __init__(self, sim: "Simulation", jobs: Iterable[Job]):
        self.sim = sim
        self.jobs = sorted(jobs, key=lambda j: j.submit_time)
        self.pos = 0

    def next_time(self) -> int | None:
        return self.jobs[self.pos].submit_time if self.pos < len(self.jobs) else None

    def inject(self, t: int) -> None:
        while self.pos < len(self.jobs) and self.jobs[self.pos].submit_time == t:
            self.sim._enqueue_arrival(self.jobs[self.pos], t)
            self.pos += 1

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.jobs)


@dataclass
class SimResult:
    log: EventLog
    records: list[metrics.JobRecord]
    summary: dict


class Simulation:
    def __init__(
        self,
        hpc: HpcConfig,
        cloud: CloudConfig,
        apps: Mapping[str, AppProfile],
        policy: Policy | None = None,
        autoscaler: AutoscalerConfig | None = None,
        wait_table: WaitTable | None = None,
        trace: Trace | Iterable[Job] = (),
        seed: int = 0,
        horizon_s: int | None = None,
        strict: bool = False,
    ):
        self.engine = Engine(seed)
        self.apps = dict(apps)
        self.hpc = HpcCluster(hpc, self.apps)
        self.cloud = CloudCluster(cloud, self.apps, self.engine)
        self.autoscaler_config = autoscaler or AutoscalerConfig()
        self.autoscaler = Autoscaler(self.autoscaler_config, self.cloud) if self.autoscaler_config.enabled else None
        self.router = FederationRouter(
            self.hpc,
            self.cloud,
            self.apps,
            policy or Policy(),
            wait_table,
            self.engine,
            cloud_elastic=self.autoscaler is not None,
        )
        self.horizon_s = horizon_s
        self.strict = strict
        self.jobs: dict[str, Job] = {}
        self._pins: dict[str, str] = {}
        self._tick_at: int | None = None
        self._feeder = _TraceFeeder(self, trace)
        self.engine.add_source(self._feeder)
        self.engine.on(EventKind.JOB_ARRIVAL, self._on_arrival)
        self.engine.on(EventKind.JOB_END, self._on_end)
        self.engine.on(EventKind.AUTOSCALE_TICK, self._on_tick)
        self.engine.on(EventKind.CANCEL_REQUEST, self._on_cancel)
        self.engine.add_instant_hook(self._schedule_pass)
        if strict:
            self.engine.add_instant_hook(self.check_invariants)
        if self.autoscaler is not None:
            self._ensure_tick(0)

    @classmethod
    def from_scenario(cls, scenario, trace: Trace | None = None, policy: Policy | None = None, strict: bool = False):
        return cls(
            scenario.hpc,
            scenario.cloud,
            scenario.apps,
            policy or scenario.policy,
            scenario.autoscaler,
            scenario.wait_table(),
            trace if trace is not None else scenario.build_trace(),
            seed=scenario.seed or 0,
            horizon_s=scenario.horizon_s,
            strict=strict,
        )

    @property
    def clock(self) -> int:
        return self.engine.clock

    @property
    def log(self) -> EventLog:
        return self.engine.log

    def cluster(self, kind: str):
        return self.hpc if kind == HPC else self.cloud

    # submissions from outside the trace (gateway, tests)

    def submit(self, job: Job, t: int | None = None, pinned: str | None = None) -> None:
        """Queue an arrival at ``t`` (default: now), exactly as a trace arrival would enter."""
        t = self.clock if t is None else t
        self.engine.advance_to(t)
        if pinned is not None:
            self._pins[job.id] = pinned
        self._enqueue_arrival(job, t)

    def cancel(self, job_id: str, t: int | None = None) -> bool:
        if t is not None:
            self.engine.advance_to(t)
        return self.router.cancel(job_id, self.clock)

    def _enqueue_arrival(self, job: Job, t: int) -> None:
        if job.id in self.jobs:
            raise ValueError(f"duplicate job id {job.id!r}")
        self.jobs[job.id] = job
        payload = {"job": job.id, **{k: v for k, v in job.to_dict().items() if k != "id"}}
        self.engine.schedule(t, EventKind.JOB_ARRIVAL, payload)

    # event handlers

    def _on_arrival(self, event: SimEvent) -> None:
        job = self.jobs[event.payload["job"]]
        t = event.time
        try:
            decision = self.router.route(job, t, pinned=self._pins.get(job.id))
        except (UnroutableJob, JobTooLarge) as exc:
            self.router.reject(job, str(exc))
            event.payload["targets"] = []
            event.payload["rejected"] = str(exc)
            return
        self.router.dispatch(decision, t)
        event.payload["targets"] = list(decision.targets)
        event.payload["policy"] = decision.policy_name
        if decision.est_tts_hpc_s is not None or decision.est_tts_cloud_s is not None:
            event.payload["est_tts_hpc_s"] = decision.est_tts_hpc_s
            event.payload["est_tts_cloud_s"] = decision.est_tts_cloud_s
        if self.autoscaler is not None:
            self._ensure_tick(t)

    def _on_end(self, event: SimEvent) -> None:
        kind = event.payload["cluster"]
        cluster = self.cluster(kind)
        entry = cluster.entries[event.payload["job"]]
        cluster.finish(entry, event.time, reschedule=False)

    def _on_cancel(self, event: SimEvent) -> None:
        event.payload["cancelled"] = self.router.cancel(event.payload["job"], event.time)

    def _on_tick(self, event: SimEvent) -> None:
        t = event.time
        self._tick_at = None
        action = self.autoscaler.tick(t)
        event.payload.update(action.to_dict())
        nxt = t + self.autoscaler_config.interval_s
        if self._has_work() or not self.autoscaler.quiescent():
            if self.horizon_s is None or nxt < self.horizon_s:
                self._tick_at = nxt
                self.engine.schedule(nxt, EventKind.AUTOSCALE_TICK, {})

    def _ensure_tick(self, t: int) -> None:
        if self._tick_at is not None:
            return
        interval = self.autoscaler_config.interval_s
        at = -(-t // interval) * interval
        if self.horizon_s is not None and at >= self.horizon_s:
            return
        self._tick_at = at
        self.engine.schedule(at, EventKind.AUTOSCALE_TICK, {})

    def _has_work(self) -> bool:
        if not self._feeder.exhausted:
            return True
        for cluster in (self.hpc, self.cloud):
            if cluster.pending() or cluster.running():
                return True
        return bool(self.cloud.provisioning_vms())

    # scheduling

    def _schedule_pass(self, t: int) -> None:
        # hpc goes first each round so it wins simultaneous starts of dual copies
        progress = True
        while progress:
            progress = False
            for cluster in (self.hpc, self.cloud):
                for entry in cluster.try_schedule(t):
                    progress = True
                    self._started(entry, t)

    def _started(self, entry: QueueEntry, t: int) -> None:
        kind = HPC if entry.cluster == self.hpc.name else CLOUD
        payload = {"job": entry.job.id, "cluster": kind, "nodes": entry.assigned_nodes}
        if entry.vm_ids:
            payload["vms"] = list(entry.vm_ids)
        else:
            payload["partition"] = entry.partition
        self.engine.fire(EventKind.JOB_START, payload)
        self.router.on_started(entry, t)
        cluster = self.cluster(kind)
        outcome = EntryState.WALLTIME_KILLED if cluster._uncapped_runtime(entry.job) > entry.job.req_walltime_s else EntryState.FINISHED
        self.engine.schedule(entry.expected_end, EventKind.JOB_END, {"job": entry.job.id, "cluster": kind, "outcome": outcome.value})

    def check_invariants(self, t: int) -> None:
        self.hpc.check_invariants(t)
        self.cloud.check_invariants(t)
        for rec in self.router.registry.values():
            live = [c for c in rec.copies.values() if c.state is not EntryState.PENDING and c.state is not EntryState.CANCELLED]
            if len(live) > 1:
                raise InvariantViolation(f"job {rec.job.id} executed on more than one cluster")

    # driving

    def run(self, t_end: int | None = None) -> SimResult:
        """Process events with time < horizon (or <= ``t_end``) and summarise."""
        if t_end is None:
            t_end = (self.horizon_s - 1) if self.horizon_s is not None else None
        if t_end is None:
            while self.engine.step():
                pass
        elif t_end >= self.clock:
            self.engine.run_until(t_end)
        return self.result()

    def run_until_settled(self, job_id: str, limit: int | None = None) -> None:
        """Advance until ``job_id`` reaches a terminal state or nothing is left to do."""
        limit = self.horizon_s if limit is None else limit
        while not self.is_settled(job_id):
            nxt = self.engine._next_instant()
            if nxt is None or (limit is not None and nxt >= limit):
                return
            self.engine.run_until(max(nxt, self.clock))

    def is_settled(self, job_id: str) -> bool:
        rec = self.router.registry.get(job_id)
        if rec is None:
            return False
        if rec.rejected:
            return True
        return all(c.state in (EntryState.FINISHED, EntryState.WALLTIME_KILLED, EntryState.CANCELLED) for c in rec.copies.values())

    def result(self) -> SimResult:
        records = metrics.collect(self.log)
        return SimResult(self.log, records, metrics.summary(records, self.log))

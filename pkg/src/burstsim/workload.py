"""Jobs, application profiles, trace ingestion and synthetic workloads."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateId,
    InvalidDistribution,
    NonPositiveField,
    ParseError,
    UnknownApp,
)

log = logging.getLogger(__name__)

HPC = "hpc"
CLOUD = "cloud"
AUTO = "auto"
CLUSTER_HINTS = (HPC, CLOUD, AUTO)


def parse_ratio(value) -> Fraction:
    """Parse a slowdown given as a number, a decimal string or ``"a/b"``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # str() keeps the decimal the user wrote instead of the binary expansion
        return Fraction(str(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class AppProfile:
    name: str
    base_runtime_s: int
    cloud_slowdown: Fraction
    reference_nodes: int = 1
    reference_tasks: int = 1
    version: str = ""

    def __post_init__(self):
        object.__setattr__(self, "cloud_slowdown", parse_ratio(self.cloud_slowdown))
        if self.base_runtime_s <= 0:
            raise NonPositiveField(f"{self.name}: base_runtime_s must be > 0")
        if self.cloud_slowdown <= 0:
            raise NonPositiveField(f"{self.name}: cloud_slowdown must be > 0")
        if self.reference_nodes <= 0 or self.reference_tasks <= 0:
            raise NonPositiveField(f"{self.name}: reference counts must be > 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "AppProfile":
        return cls(
            name=str(d["name"]),
            base_runtime_s=int(d["base_runtime_s"]),
            cloud_slowdown=parse_ratio(d["cloud_slowdown"]),
            reference_nodes=int(d.get("reference_nodes", 1)),
            reference_tasks=int(d.get("reference_tasks", 1)),
            version=str(d.get("version", "")),
        )

    def to_dict(self) -> dict:
        s = self.cloud_slowdown
        return {
            "name": self.name,
            "base_runtime_s": self.base_runtime_s,
            "cloud_slowdown": str(s.numerator) if s.denominator == 1 else f"{s.numerator}/{s.denominator}",
            "reference_nodes": self.reference_nodes,
            "reference_tasks": self.reference_tasks,
        }


# Measured averages from the Stampede2 (SKX) vs Jetstream comparison runs.
# Slowdowns are kept as exact cloud/HPC ratios so the scaled runtimes round-trip.
PAPER_APPS: tuple[AppProfile, ...] = (
    AppProfile("GROMACS", 3940, Fraction(6366, 3940), 4, 8, "2016.4"),
    AppProfile("NAMD", 160, Fraction(238, 160), 8, 16, "2.10"),
    AppProfile("OpenSeesSP", 226, Fraction(403, 226), 1, 1, "2.5.0"),
    AppProfile("WRF", 230, Fraction(369, 230), 2, 4, "3.6.1"),
)


def default_apps() -> dict[str, AppProfile]:
    return {a.name: a for a in PAPER_APPS}


@dataclass(frozen=True)
class Job:
    id: str
    submit_time: int
    app: str
    nodes: int
    req_walltime_s: int
    base_runtime_s: int
    user: str = "anon"
    tasks_per_node: int = 1
    cluster_hint: str = AUTO
    partition: str | None = None

    def __post_init__(self):
        for name in ("nodes", "req_walltime_s", "base_runtime_s", "tasks_per_node"):
            if getattr(self, name) <= 0:
                raise NonPositiveField(f"job {self.id}: {name} must be >= 1")
        if self.submit_time < 0:
            raise NonPositiveField(f"job {self.id}: submit_time must be >= 0")
        if self.cluster_hint not in CLUSTER_HINTS:
            raise ValueError(f"job {self.id}: cluster_hint must be one of {CLUSTER_HINTS}")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "submit_time_s": self.submit_time,
            "user": self.user,
            "app": self.app,
            "nodes": self.nodes,
            "tasks_per_node": self.tasks_per_node,
            "req_walltime_s": self.req_walltime_s,
            "base_runtime_s": self.base_runtime_s,
            "cluster_hint": self.cluster_hint,
        }
        if self.partition is not None:
            d["partition"] = self.partition
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Job":
        return cls(
            id=str(d["id"]),
            submit_time=int(d["submit_time_s"]),
            app=str(d["app"]),
            nodes=int(d["nodes"]),
            req_walltime_s=int(d["req_walltime_s"]),
            base_runtime_s=int(d["base_runtime_s"]),
            user=str(d.get("user", "anon")),
            tasks_per_node=int(d.get("tasks_per_node", 1)),
            cluster_hint=str(d.get("cluster_hint", AUTO)),
            partition=d.get("partition"),
        )


@dataclass
class Trace:
    jobs: list[Job] = field(default_factory=list)
    dropped: int = 0

    def __post_init__(self):
        self.jobs = sorted(self.jobs, key=lambda j: j.submit_time)  # stable: file order within a tick
        seen = set()
        for job in self.jobs:
            if job.id in seen:
                raise DuplicateId(f"duplicate job id {job.id!r}")
            seen.add(job.id)

    def __len__(self) -> int:
        return len(self.jobs)

    def __iter__(self):
        return iter(self.jobs)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(j.to_dict(), sort_keys=True) + "\n" for j in self.jobs)


_REQUIRED_JSONL = ("id", "submit_time_s", "app", "nodes", "req_walltime_s", "base_runtime_s")


def load_trace_jsonl(path) -> Trace:
    jobs: list[Job] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno)
            missing = [k for k in _REQUIRED_JSONL if k not in rec]
            if missing:
                raise ParseError(f"missing field(s) {', '.join(missing)}", lineno)
            for key in ("submit_time_s", "nodes", "req_walltime_s", "base_runtime_s", "tasks_per_node"):
                if key in rec and not isinstance(rec[key], int):
                    raise ParseError(f"{key} must be an integer", lineno)
            try:
                job = Job.from_dict(rec)
            except NonPositiveField as exc:
                raise NonPositiveField(f"line {lineno}: {exc}") from exc
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            if job.id in seen:
                raise DuplicateId(f"line {lineno}: duplicate job id {job.id!r}")
            seen.add(job.id)
            jobs.append(job)
    return Trace(jobs)


def load_trace_swf(path, cores_per_node: int = 48, app: str = "generic") -> Trace:
    """Read a Standard Workload Format file.

    Fields used (1-based): 1 job id, 2 submit time, 4 run time,
    5 allocated processors, 9 requested time, 12 user id. A missing requested
    time falls back to the run time.
    """
    if cores_per_node <= 0:
        raise NonPositiveField("cores_per_node must be > 0")
    jobs: list[Job] = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith(";"):
                continue
            cols = text.split()
            if len(cols) < 9:
                raise ParseError(f"expected at least 9 fields, got {len(cols)}", lineno)
            try:
                vals = [int(float(c)) for c in cols]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            job_id, submit, runtime, procs, req_time = vals[0], vals[1], vals[3], vals[4], vals[8]
            if runtime < 0 or procs <= 0:
                dropped += 1
                continue
            runtime = max(runtime, 1)
            if req_time <= 0:
                req_time = runtime
            user = cols[11] if len(cols) > 11 and vals[11] >= 0 else "anon"
            jobs.append(
                Job(
                    id=str(job_id),
                    submit_time=max(submit, 0),
                    app=app,
                    nodes=-(-procs // cores_per_node),
                    req_walltime_s=req_time,
                    base_runtime_s=runtime,
                    user=user,
                )
            )
    if dropped:
        log.warning("SWF %s: dropped %d record(s) with missing runtime or processors", path, dropped)
    return Trace(jobs, dropped=dropped)


def _check_dist(name: str, dist: Mapping) -> tuple[list, list[float]]:
    if not dist:
        raise InvalidDistribution(f"{name} is empty")
    keys, probs = list(dist.keys()), [float(p) for p in dist.values()]
    if any(p < 0 for p in probs):
        raise InvalidDistribution(f"{name} has a negative probability")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise InvalidDistribution(f"{name} probabilities sum to {sum(probs)!r}, not 1")
    return keys, probs


def synth_workload(
    rate_jobs_per_hour: float,
    duration_s: int,
    node_dist: Mapping[int, float],
    walltime_dist: Mapping[int, float],
    app_mix: Mapping[str, float],
    rng: random.Random,
    runtime_fraction: tuple[float, float] = (0.2, 1.0),
    id_prefix: str = "s",
) -> Trace:
    """Poisson arrivals over ``[0, duration_s)`` with discrete node/walltime/app draws."""
    node_keys, node_p = _check_dist("node_dist", node_dist)
    wall_keys, wall_p = _check_dist("walltime_dist", walltime_dist)
    app_keys, app_p = _check_dist("app_mix", app_mix)
    lo, hi = runtime_fraction
    if not 0 < lo <= hi:
        raise InvalidDistribution("runtime_fraction must satisfy 0 < lo <= hi")
    if rate_jobs_per_hour < 0:
        raise InvalidDistribution("rate must be >= 0")
    jobs: list[Job] = []
    if rate_jobs_per_hour == 0 or duration_s <= 0:
        return Trace(jobs)
    rate = rate_jobs_per_hour / 3600.0
    t = 0.0
    while True:
        t += rng.expovariate(rate)
        if t >= duration_s:
            break
        nodes = int(rng.choices(node_keys, node_p)[0])
        wall = int(rng.choices(wall_keys, wall_p)[0])
        app = str(rng.choices(app_keys, app_p)[0])
        frac = rng.uniform(lo, hi)
        base = max(1, math.ceil(frac * wall))
        jobs.append(
            Job(
                id=f"{id_prefix}{len(jobs):06d}",
                submit_time=int(t),
                app=app,
                nodes=nodes,
                req_walltime_s=wall,
                base_runtime_s=base,
            )
        )
    return Trace(jobs)


def runtime_on(job: Job, target: str, apps: Mapping[str, AppProfile]) -> int:
    """Execution time of ``job`` on ``target`` ("hpc" or "cloud"), capped at walltime."""
    profile = apps.get(job.app)
    if profile is None:
        raise UnknownApp(f"unknown application {job.app!r}")
    if target == HPC:
        run = job.base_runtime_s
    elif target == CLOUD:
        run = math.ceil(job.base_runtime_s * profile.cloud_slowdown)
    else:
        raise ValueError(f"target must be {HPC!r} or {CLOUD!r}")
    return min(run, job.req_walltime_s)


def with_hint(jobs: Sequence[Job], hint: str) -> list[Job]:
    return [replace(j, cluster_hint=hint) for j in jobs]


def load_apps(records: Iterable[Mapping]) -> dict[str, AppProfile]:
    apps: dict[str, AppProfile] = {}
    for rec in records:
        profile = AppProfile.from_dict(rec)
        if profile.name in apps:
            raise DuplicateId(f"duplicate app profile {profile.name!r}")
        apps[profile.name] = profile
    return apps

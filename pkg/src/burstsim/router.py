"""Job routing between the HPC and cloud clusters.

The router owns the shared job registry: every job routed through it has one
registry record holding the copies submitted to each cluster. When a copy
starts, the pending copies on the other cluster are cancelled, so at most one
copy ever executes.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from importlib import resources
from typing import Mapping

from .batch import COMPLETED, EntryState, QueueEntry
from .engine import Engine, EventKind
from .errors import ConfigError, InvariantViolation, ParseError, UnroutableJob
from .workload import AUTO, CLOUD, HPC, AppProfile, Job, runtime_on

RUNTIME_BINS_MIN = ((1, 4), (4, 16), (16, 64), (64, 256), (256, 1024), (1024, 4096))
NODE_BINS = ((1, 4), (4, 16), (16, 64), (64, 256), (256, None))
RUNTIME_LABELS = tuple(f"{lo}-{hi}" for lo, hi in RUNTIME_BINS_MIN)
NODE_LABELS = tuple(f">{lo}" if hi is None else f"{lo}-{hi}" for lo, hi in NODE_BINS)


def runtime_bin(req_walltime_s: int) -> int:
    """Row index for a requested runtime; bins are upper-inclusive and clamp at both ends."""
    minutes = Fraction(req_walltime_s, 60)
    for i, (_, hi) in enumerate(RUNTIME_BINS_MIN):
        if minutes <= hi:
            return i
    return len(RUNTIME_BINS_MIN) - 1


def node_bin(nodes: int) -> int:
    for i, (_, hi) in enumerate(NODE_BINS):
        if hi is None or nodes <= hi:
            return i
    return len(NODE_BINS) - 1


def round_half_up(x) -> int:
    return int(Decimal(x).quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class WaitTable:
    """Median queue wait as a percentage of requested run time, 6 runtime x 5 node bins."""

    cells: tuple[tuple[Decimal, ...], ...]

    def __post_init__(self):
        if len(self.cells) != len(RUNTIME_BINS_MIN) or any(len(r) != len(NODE_BINS) for r in self.cells):
            raise ConfigError("wait table must have 6 runtime rows and 5 node columns")
        if any(c < 0 for r in self.cells for c in r):
            raise ConfigError("wait table cells must be >= 0")

    def percent(self, req_walltime_s: int, nodes: int) -> Decimal:
        return self.cells[runtime_bin(req_walltime_s)][node_bin(nodes)]

    def estimate(self, req_walltime_s: int, nodes: int) -> int:
        pct = self.percent(req_walltime_s, nodes)
        return round_half_up(Decimal(req_walltime_s) * pct / 100)

    @classmethod
    def from_csv(cls, text: str) -> "WaitTable":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if not rows:
            raise ParseError("empty wait table")
        header = [c.strip() for c in rows[0][1:]]
        if header != list(NODE_LABELS):
            raise ParseError(f"wait table header {header} != {list(NODE_LABELS)}", 1)
        cells = []
        for lineno, row in enumerate(rows[1:], 2):
            idx = len(cells)
            if idx >= len(RUNTIME_LABELS) or row[0].strip() != RUNTIME_LABELS[idx]:
                raise ParseError(f"unexpected runtime bin {row[0]!r}", lineno)
            if len(row) != 1 + len(NODE_LABELS):
                raise ParseError(f"expected {len(NODE_LABELS)} cells", lineno)
            try:
                cells.append(tuple(Decimal(c.strip().rstrip("%")) for c in row[1:]))
            except ArithmeticError as exc:
                raise ParseError(str(exc), lineno) from exc
        return cls(tuple(cells))

    @classmethod
    def load(cls, path=None) -> "WaitTable":
        if path is None:
            text = resources.files("burstsim").joinpath("data/wait_table.csv").read_text(encoding="utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_csv(text)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["req_time_min", *NODE_LABELS])
        for label, row in zip(RUNTIME_LABELS, self.cells):
            w.writerow([label, *(f"{c:.2f}" for c in row)])
        return out.getvalue()


class PolicyVariant(str, enum.Enum):
    HINT_ONLY = "HintOnly"
    ALWAYS_HPC = "AlwaysHpc"
    ALWAYS_CLOUD = "AlwaysCloud"
    DUAL_SUBMIT = "DualSubmit"
    WAIT_THRESHOLD = "WaitThreshold"
    COST_MODEL = "CostModel"


PREDICTIVE = frozenset({PolicyVariant.WAIT_THRESHOLD, PolicyVariant.COST_MODEL})


@dataclass(frozen=True)
class Policy:
    variant: PolicyVariant = PolicyVariant.HINT_ONLY
    threshold_s: int | None = None
    wait_source: str = "table"

    def __post_init__(self):
        object.__setattr__(self, "variant", PolicyVariant(self.variant))
        if self.variant is PolicyVariant.WAIT_THRESHOLD and (self.threshold_s is None or self.threshold_s <= 0):
            raise ConfigError("WaitThreshold needs threshold_s > 0")
        if self.wait_source not in ("table", "live"):
            raise ConfigError("wait_source must be 'table' or 'live'")

    @property
    def name(self) -> str:
        if self.variant is PolicyVariant.WAIT_THRESHOLD:
            return f"WaitThreshold({self.threshold_s})"
        return self.variant.value

    @classmethod
    def parse(cls, text: str, wait_source: str | None = None) -> "Policy":
        """``"CostModel"``, ``"WaitThreshold:3600"``, optionally ``"...@live"``."""
        text = text.strip()
        if "@" in text:
            text, wait_source = text.split("@", 1)
        name, _, arg = text.partition(":")
        try:
            variant = PolicyVariant(name)
        except ValueError:
            raise ConfigError(f"unknown policy {name!r}") from None
        threshold = int(arg) if arg else None
        if wait_source is None:
            wait_source = "live" if variant is PolicyVariant.COST_MODEL else "table"
        return cls(variant, threshold, wait_source)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Policy":
        unknown = set(d) - {"variant", "threshold_s", "wait_source", "wait_table_path"}
        if unknown:
            raise ConfigError(f"unknown policy keys: {sorted(unknown)}")
        try:
            variant = PolicyVariant(d.get("variant", "HintOnly"))
        except ValueError:
            raise ConfigError(f"unknown policy {d.get('variant')!r}") from None
        default_source = "live" if variant is PolicyVariant.COST_MODEL else "table"
        return cls(variant, d.get("threshold_s"), d.get("wait_source", default_source))


@dataclass
class BurstDecision:
    job_id: str
    targets: tuple[str, ...]
    policy_name: str
    reason: str
    est_tts_hpc_s: int | None = None
    est_tts_cloud_s: int | None = None
    job: Job | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.targets:
            raise ValueError("a decision needs at least one target")

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "targets": list(self.targets),
            "policy": self.policy_name,
            "reason": self.reason,
            "est_tts_hpc_s": self.est_tts_hpc_s,
            "est_tts_cloud_s": self.est_tts_cloud_s,
        }


def prefers_cloud(est_tts_hpc: int | None, est_tts_cloud: int | None) -> bool:
    """Cost-model verdict: burst only when the cloud finishes strictly sooner."""
    if est_tts_cloud is None:
        return False
    if est_tts_hpc is None:
        return True
    return est_tts_cloud < est_tts_hpc


@dataclass
class FederatedJob:
    job: Job
    decision: BurstDecision | None = None
    copies: dict[str, QueueEntry] = field(default_factory=dict)
    winner: str | None = None
    rejected: str | None = None
    user_cancelled: bool = False

    def executed(self) -> QueueEntry | None:
        return self.copies.get(self.winner) if self.winner else None


class FederationRouter:
    def __init__(
        self,
        hpc,
        cloud,
        apps: Mapping[str, AppProfile],
        policy: Policy,
        wait_table: WaitTable | None = None,
        engine: Engine | None = None,
        cloud_elastic: bool = False,
    ):
        self.clusters = {HPC: hpc, CLOUD: cloud}
        self.apps = apps
        self.policy = policy
        self.wait_table = wait_table or WaitTable.load()
        self.engine = engine
        self.cloud_elastic = cloud_elastic
        self.registry: dict[str, FederatedJob] = {}

    @property
    def hpc(self):
        return self.clusters[HPC]

    @property
    def cloud(self):
        return self.clusters[CLOUD]

    def _fits(self, kind: str, job: Job) -> bool:
        cluster = self.clusters[kind]
        if cluster is None:
            return False
        return job.nodes <= cluster.capacity(cluster.partition_for(job))

    # estimates

    def estimate_wait(self, job: Job, source: str, t: int) -> int:
        if source == "table":
            return self.wait_table.estimate(job.req_walltime_s, job.nodes)
        if source == "live":
            return self.hpc.estimate_start(job, t) - t
        raise ValueError(f"unknown wait source {source!r}")

    def cloud_ready_delay(self, job: Job, t: int) -> int | None:
        cloud = self.cloud
        if not self._fits(CLOUD, job):
            return None
        if len(cloud.idle_vms()) >= job.nodes and not cloud.pending():
            return 0
        start = cloud.estimate_start(job, t, assume_scale_up=self.cloud_elastic)
        return None if start is None else start - t

    def estimates(self, job: Job, t: int, source: str) -> tuple[int | None, int | None]:
        hpc_tts = None
        if self._fits(HPC, job):
            hpc_tts = self.estimate_wait(job, source, t) + runtime_on(job, HPC, self.apps)
        delay = self.cloud_ready_delay(job, t)
        cloud_tts = None if delay is None else delay + runtime_on(job, CLOUD, self.apps)
        return hpc_tts, cloud_tts

    # routing

    def route(self, job: Job, t: int, policy: Policy | None = None, pinned: str | None = None) -> BurstDecision:
        policy = policy or self.policy
        hpc_ok, cloud_ok = self._fits(HPC, job), self._fits(CLOUD, job)
        if not (hpc_ok or cloud_ok):
            raise UnroutableJob(f"job {job.id} ({job.nodes} nodes) fits neither cluster")
        name = policy.name

        def fixed(kind: str, reason: str) -> BurstDecision:
            if not (hpc_ok if kind == HPC else cloud_ok):
                other = CLOUD if kind == HPC else HPC
                return BurstDecision(job.id, (other,), name, f"{reason}; too large for {kind}", job=job)
            return BurstDecision(job.id, (kind,), name, reason, job=job)

        if pinned is not None:
            if not (hpc_ok if pinned == HPC else cloud_ok):
                raise UnroutableJob(f"job {job.id} does not fit pinned system {pinned}")
            return BurstDecision(job.id, (pinned,), name, f"pinned to {pinned}", job=job)

        v = policy.variant
        if v is PolicyVariant.HINT_ONLY:
            hint = HPC if job.cluster_hint == AUTO else job.cluster_hint
            return fixed(hint, f"cluster hint {job.cluster_hint}")
        if v is PolicyVariant.ALWAYS_HPC:
            return fixed(HPC, "always hpc")
        if v is PolicyVariant.ALWAYS_CLOUD:
            return fixed(CLOUD, "always cloud")
        if v is PolicyVariant.DUAL_SUBMIT:
            targets = tuple(k for k, ok in ((HPC, hpc_ok), (CLOUD, cloud_ok)) if ok)
            return BurstDecision(job.id, targets, name, "submit to all federated clusters", job=job)

        hpc_tts, cloud_tts = self.estimates(job, t, policy.wait_source)
        if not hpc_ok:
            target, reason = CLOUD, "too large for hpc"
        elif v is PolicyVariant.WAIT_THRESHOLD:
            wait = hpc_tts - runtime_on(job, HPC, self.apps)
            burst = cloud_ok and wait > policy.threshold_s
            target = CLOUD if burst else HPC
            reason = f"estimated wait {wait}s {'>' if burst else '<='} {policy.threshold_s}s"
        else:
            burst = cloud_ok and prefers_cloud(hpc_tts, cloud_tts)
            target = CLOUD if burst else HPC
            reason = f"tts hpc {hpc_tts}s vs cloud {cloud_tts}s"
        return BurstDecision(job.id, (target,), name, reason, hpc_tts, cloud_tts, job=job)

    def dispatch(self, decision: BurstDecision, t: int) -> list[QueueEntry]:
        job = decision.job
        if job is None:
            raise ValueError("decision carries no job")
        rec = self.registry.setdefault(job.id, FederatedJob(job))
        rec.decision = decision
        entries = []
        for kind in (HPC, CLOUD):
            if kind in decision.targets:
                entry = self.clusters[kind].submit(job, t)
                rec.copies[kind] = entry
                entries.append(entry)
        return entries

    def reject(self, job: Job, reason: str) -> None:
        rec = self.registry.setdefault(job.id, FederatedJob(job))
        rec.rejected = reason

    # lifecycle hooks

    def on_started(self, entry: QueueEntry, t: int) -> list[str]:
        """Record the winning copy and cancel its pending siblings. Returns cancelled cluster kinds."""
        rec = self.registry.get(entry.job.id)
        kind = self._kind_of(entry)
        if rec is None:
            return []
        if rec.winner is not None and rec.winner != kind:
            raise InvariantViolation(f"job {entry.job.id} started on both {rec.winner} and {kind}")
        rec.winner = kind
        cancelled = []
        for other, copy in rec.copies.items():
            if other != kind and copy.state is EntryState.PENDING:
                ok = self.clusters[other].cancel(entry.job.id, t)
                self._log_cancel(entry.job.id, other, ok, "duplicate")
                cancelled.append(other)
        return cancelled

    def may_start(self, entry: QueueEntry) -> bool:
        rec = self.registry.get(entry.job.id)
        return rec is None or rec.winner is None or rec.winner == self._kind_of(entry)

    def cancel(self, job_id: str, t: int) -> bool:
        """User cancel: pending copies are cancelled; running work is never preempted."""
        rec = self.registry.get(job_id)
        if rec is None:
            return False
        if rec.winner is not None:
            self._log_cancel(job_id, rec.winner, False, "user")
            return False
        any_cancelled = False
        for kind, copy in rec.copies.items():
            ok = self.clusters[kind].cancel(job_id, t)
            self._log_cancel(job_id, kind, ok, "user")
            any_cancelled |= ok
        rec.user_cancelled = rec.user_cancelled or any_cancelled
        return any_cancelled

    def _kind_of(self, entry: QueueEntry) -> str:
        return HPC if self.clusters[HPC] is not None and entry.cluster == self.clusters[HPC].name else CLOUD

    def _log_cancel(self, job_id: str, kind: str, cancelled: bool, reason: str) -> None:
        if self.engine is not None:
            self.engine.fire(
                EventKind.CANCEL_REQUEST,
                {"job": job_id, "cluster": kind, "cancelled": cancelled, "reason": reason},
            )

    # bookkeeping

    def completed_copies(self, job_id: str) -> list[QueueEntry]:
        rec = self.registry[job_id]
        return [c for c in rec.copies.values() if c.state in COMPLETED]


__all__ = [
    "BurstDecision",
    "FederationRouter",
    "FederatedJob",
    "NODE_LABELS",
    "Policy",
    "PolicyVariant",
    "RUNTIME_LABELS",
    "WaitTable",
    "node_bin",
    "prefers_cloud",
    "round_half_up",
    "runtime_bin",
]

"""Per-job records plus the wait and run-time reports derived from them.

Everything here is pure post-processing of an event log: the same log always
gives byte-identical reports. Medians use the lower-middle element for even
counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Sequence

from .engine import EventLog
from .errors import CorruptLog
from .router import NODE_LABELS, RUNTIME_LABELS, node_bin, runtime_bin

EXECUTED = ("Finished", "WalltimeKilled")
RECORD_FIELDS = ("job_id", "app", "cluster", "submit_s", "start_s", "end_s", "wait_s", "run_s", "tts_s", "outcome")


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    app: str
    cluster: str | None
    submit_s: int
    start_s: int | None
    end_s: int | None
    outcome: str
    nodes: int = 1
    req_walltime_s: int = 1

    @property
    def executed(self) -> bool:
        return self.outcome in EXECUTED

    @property
    def wait_s(self) -> int | None:
        return None if self.start_s is None else self.start_s - self.submit_s

    @property
    def run_s(self) -> int | None:
        return None if self.end_s is None or self.start_s is None else self.end_s - self.start_s

    @property
    def tts_s(self) -> int | None:
        return None if self.end_s is None or not self.executed else self.end_s - self.submit_s

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in RECORD_FIELDS}
        return {k: ("" if v is None else v) for k, v in d.items()}


def lower_median(values: Sequence):
    if not values:
        return None
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def fmt_decimal(x: Fraction, places: int = 2) -> str:
    q = Decimal(1).scaleb(-places)
    return str((Decimal(x.numerator) / Decimal(x.denominator)).quantize(q, rounding=ROUND_HALF_UP))


def hms(seconds) -> str:
    """Render seconds as H:MM:SS, rounding half up to whole seconds."""
    s = math.floor(Fraction(seconds) + Fraction(1, 2))
    return f"{s // 3600}:{s % 3600 // 60:02d}:{s % 60:02d}"


def collect(log: EventLog | Iterable) -> list[JobRecord]:
    """One record per job copy (executed, cancelled, rejected or still in flight)."""
    arrivals: dict[str, dict] = {}
    order: list[str] = []
    starts: dict[tuple[str, str], int] = {}
    ends: dict[tuple[str, str], tuple[int, str]] = {}
    cancels: dict[tuple[str, str], int] = {}
    for entry in log:
        p, t = entry.payload, entry.t
        try:
            if entry.kind == "JobArrival":
                jid = p["job"]
                if jid in arrivals:
                    raise CorruptLog(f"job {jid} arrives twice")
                arrivals[jid] = p
                order.append(jid)
            elif entry.kind == "JobStart":
                key = (p["job"], p["cluster"])
                if p["job"] not in arrivals:
                    raise CorruptLog(f"job {p['job']} starts before arriving")
                if key in starts or key in cancels:
                    raise CorruptLog(f"job {key} started twice or after cancel")
                starts[key] = t
            elif entry.kind == "JobEnd":
                key = (p["job"], p["cluster"])
                if key not in starts or key in ends:
                    raise CorruptLog(f"job {key} ends without a start")
                ends[key] = (t, p["outcome"])
            elif entry.kind == "CancelRequest":
                if p.get("cancelled"):
                    key = (p["job"], p["cluster"])
                    if key in starts:
                        raise CorruptLog(f"running job {key} reported cancelled")
                    cancels[key] = t
        except (KeyError, TypeError) as exc:
            raise CorruptLog(f"malformed {entry.kind} at t={t}: {exc}") from exc

    records: list[JobRecord] = []
    for jid in order:
        p = arrivals[jid]
        base = dict(job_id=jid, app=p.get("app", ""), submit_s=p["submit_time_s"], nodes=p.get("nodes", 1),
                    req_walltime_s=p.get("req_walltime_s", 1))
        targets = p.get("targets") or []
        if not targets:
            records.append(JobRecord(cluster=None, start_s=None, end_s=None, outcome="Rejected", **base))
            continue
        for cluster in targets:
            key = (jid, cluster)
            if key in ends:
                end, outcome = ends[key]
                records.append(JobRecord(cluster=cluster, start_s=starts[key], end_s=end, outcome=outcome, **base))
            elif key in starts:
                records.append(JobRecord(cluster=cluster, start_s=starts[key], end_s=None, outcome="Running", **base))
            elif key in cancels:
                records.append(JobRecord(cluster=cluster, start_s=None, end_s=cancels[key], outcome="Cancelled", **base))
            else:
                records.append(JobRecord(cluster=cluster, start_s=None, end_s=None, outcome="Pending", **base))
    return records


def records_csv(records: Iterable[JobRecord]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=RECORD_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return out.getvalue()


@dataclass
class BinnedWaitReport:
    cells: list[list[Fraction | None]]
    counts: list[list[int]]

    def cell(self, row: int, col: int) -> Fraction | None:
        return self.cells[row][col]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["req_time_min", *NODE_LABELS])
        for label, row in zip(RUNTIME_LABELS, self.cells):
            w.writerow([label, *("-" if c is None else fmt_decimal(c) + "%" for c in row)])
        return out.getvalue()

    def to_json(self) -> str:
        doc = {
            "row_bins_min": list(RUNTIME_LABELS),
            "col_bins_nodes": list(NODE_LABELS),
            "median_wait_pct": [[None if c is None else fmt_decimal(c) for c in row] for row in self.cells],
            "counts": self.counts,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def binned_wait_report(records: Iterable[JobRecord]) -> BinnedWaitReport:
    buckets: dict[tuple[int, int], list[Fraction]] = defaultdict(list)
    for r in records:
        if not r.executed:
            continue
        ratio = Fraction(r.wait_s, r.req_walltime_s) * 100
        buckets[(runtime_bin(r.req_walltime_s), node_bin(r.nodes))].append(ratio)
    cells = [[lower_median(buckets.get((i, j), [])) for j in range(len(NODE_LABELS))] for i in range(len(RUNTIME_LABELS))]
    counts = [[len(buckets.get((i, j), [])) for j in range(len(NODE_LABELS))] for i in range(len(RUNTIME_LABELS))]
    return BinnedWaitReport(cells, counts)


@dataclass(frozen=True)
class ComparisonRow:
    app: str
    mean_run_a: Fraction
    mean_run_b: Fraction
    mean_tts_a: Fraction
    mean_tts_b: Fraction

    @property
    def ratio(self) -> Fraction:
        return self.mean_run_b / self.mean_run_a


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    rows: list[ComparisonRow]

    def row(self, app: str) -> ComparisonRow:
        return next(r for r in self.rows if r.app == app)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        a, b = self.label_a, self.label_b
        w.writerow(["app", f"{a}_run", f"{b}_run", f"{a}_tts", f"{b}_tts", "ratio"])
        for r in self.rows:
            w.writerow([r.app, hms(r.mean_run_a), hms(r.mean_run_b), hms(r.mean_tts_a), hms(r.mean_tts_b), fmt_decimal(r.ratio)])
        return out.getvalue()


def _mean(values: Sequence[int]) -> Fraction:
    return Fraction(sum(values), len(values))


def comparison_report(records_a: Iterable[JobRecord], records_b: Iterable[JobRecord], label_a: str = "a", label_b: str = "b") -> ComparisonReport:
    by_a: dict[str, list[JobRecord]] = defaultdict(list)
    by_b: dict[str, list[JobRecord]] = defaultdict(list)
    for r in records_a:
        if r.executed:
            by_a[r.app].append(r)
    for r in records_b:
        if r.executed:
            by_b[r.app].append(r)
    if not by_a or not by_b:
        raise ValueError("comparison needs executed jobs in both record sets")
    rows = []
    for app in sorted(set(by_a) & set(by_b)):
        ra, rb = by_a[app], by_b[app]
        rows.append(
            ComparisonRow(
                app,
                _mean([r.run_s for r in ra]),
                _mean([r.run_s for r in rb]),
                _mean([r.tts_s for r in ra]),
                _mean([r.tts_s for r in rb]),
            )
        )
    return ComparisonReport(label_a, label_b, rows)


def vm_seconds(log: EventLog | Iterable) -> int:
    alive: dict[int, int] = {}
    total = 0
    last_t = 0
    for entry in log:
        last_t = entry.t
        if entry.kind != "VmStageComplete" or entry.payload.get("ignored"):
            continue
        vm, stage = entry.payload["vm"], entry.payload["stage"]
        if stage in ("initial", "requested"):
            alive[vm] = entry.t
        elif stage == "terminate" and vm in alive:
            total += entry.t - alive.pop(vm)
    total += sum(last_t - t0 for t0 in alive.values())
    return total


def summary(records: Sequence[JobRecord], log: EventLog | Iterable) -> dict:
    done = [r for r in records if r.executed]
    waits = [r.wait_s for r in done]
    by_app: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    for r in done:
        by_app[r.cluster][r.app].append(r.run_s)
    mean_wait = None if not waits else float(round(Decimal(sum(waits)) / len(waits), 3))
    return {
        "median_tts_s": lower_median([r.tts_s for r in done]),
        "mean_wait_s": mean_wait,
        "jobs_bursted": sum(1 for r in done if r.cluster == "cloud"),
        "vm_hours": float(round(Decimal(vm_seconds(log)) / 3600, 4)),
        "jobs_total": len({r.job_id for r in records}),
        "jobs_completed": len(done),
        "copies_cancelled": sum(1 for r in records if r.outcome == "Cancelled"),
        "mean_run_s_by_app": {
            cluster: {app: float(fmt_decimal(_mean(v), 1)) for app, v in sorted(apps.items())}
            for cluster, apps in sorted(by_app.items())
        },
    }


def summary_json(summary_doc: dict) -> str:
    return json.dumps(summary_doc, indent=2, sort_keys=True) + "\n"


__all__ = [
    "BinnedWaitReport",
    "ComparisonReport",
    "JobRecord",
    "binned_wait_report",
    "collect",
    "comparison_report",
    "hms",
    "lower_median",
    "records_csv",
    "summary",
    "summary_json",
    "vm_seconds",
]

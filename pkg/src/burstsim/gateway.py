"""HTTP+JSON jobs API in front of a simulation.

`GatewayService.handle` is the whole API as a plain function of
(method, path, headers, body); `make_server` wraps it in a stdlib HTTP server.
Virtual time only moves when a request says so: an ``X-Sim-Time`` header
advances the simulation to that instant, and in blocking mode a job
submitted without the header is run until it settles.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from .batch import EntryState
from .errors import BurstSimError
from .simulation import Simulation
from .workload import AUTO, CLOUD, HPC, Job

STATUSES = ("PENDING", "SUBMITTED", "QUEUED", "RUNNING", "FINISHED", "FAILED", "CANCELLED")
TERMINAL_STATUSES = frozenset({"FINISHED", "FAILED", "CANCELLED"})
_RANK = {s: i for i, s in enumerate(STATUSES)}
_ID = re.compile(r"^[A-Za-z0-9._-]{1,128}$")


class ApiError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass
class ExecutionSystem:
    id: str
    kind: str
    description: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "description": self.description}


@dataclass
class StorageSystem:
    id: str
    root_path: str = "/"
    description: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "root_path": self.root_path, "description": self.description}


@dataclass
class AppRegistration:
    id: str
    name: str
    version: str
    profile: str
    default_system: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "version": self.version,
            "profile": self.profile,
            "default_system": self.default_system,
        }


@dataclass
class GatewayJob:
    id: str
    app: str
    parameters: dict
    target: str
    status: str = "PENDING"
    provenance: dict = field(default_factory=dict)
    frozen: bool = False

    def advance(self, status: str) -> None:
        # statuses only move forward; a stale derivation never rolls one back
        if _RANK[status] > _RANK[self.status]:
            self.status = status

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "app": self.app,
            "parameters": dict(self.parameters),
            "target": self.target,
            "status": self.status,
            "provenance": dict(self.provenance),
        }


def _body_json(body: bytes | str | dict | None) -> Any:
    if isinstance(body, (dict, list)):  # in-process callers may pass the document directly
        return body
    if body is None or body == b"" or body == "":
        raise ApiError(400, "request body required")
    try:
        return json.loads(body)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ApiError(400, f"malformed JSON: {exc}") from None


def _require_id(doc: Mapping, key: str = "id") -> str:
    value = doc.get(key)
    if not isinstance(value, str) or not _ID.match(value):
        raise ApiError(400, f"{key!r} must be a non-empty identifier")
    return value


def _positive_int(params: Mapping, key: str, default: int | None = None) -> int:
    value = params.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ApiError(400, f"parameter {key!r} must be a positive integer")
    return value


class GatewayService:
    def __init__(self, sim: Simulation, blocking: bool = True):
        self.sim = sim
        self.blocking = blocking
        self.systems: dict[str, ExecutionSystem] = {}
        self.storage: dict[str, StorageSystem] = {}
        self.apps: dict[str, AppRegistration] = {}
        self.jobs: dict[str, GatewayJob] = {}
        self._lock = threading.Lock()
        self._next_job = 0

    def register_defaults(self) -> None:
        """Register the simulation's two clusters and one app per profile."""
        self.systems[self.sim.hpc.name] = ExecutionSystem(self.sim.hpc.name, HPC, "HPC batch system")
        self.systems[self.sim.cloud.name] = ExecutionSystem(self.sim.cloud.name, CLOUD, "elastic cloud cluster")
        for name, profile in sorted(self.sim.apps.items()):
            self.apps[name] = AppRegistration(name, name, profile.version, name)

    # dispatch

    def handle(self, method: str, path: str, headers: Mapping[str, str] | None = None, body=None) -> tuple[int, dict | list]:
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        with self._lock:
            try:
                return self._dispatch(method.upper(), path.split("?", 1)[0].rstrip("/"), headers, body)
            except ApiError as exc:
                return exc.code, {"error": exc.message, "code": exc.code}

    def _dispatch(self, method: str, path: str, headers: dict, body) -> tuple[int, Any]:
        sim_time = self._sim_time(headers)
        parts = path.split("/")[1:]
        if len(parts) < 2 or parts[0] != "v1":
            raise ApiError(404, f"no route for {path}")
        resource, rest = parts[1], parts[2:]
        if resource in ("systems", "storage", "apps") and not rest:
            if method == "GET":
                return 200, [e.to_dict() for e in self._registry(resource).values()]
            if method == "POST":
                return 201, self._create(resource, _body_json(body))
        elif resource == "jobs":
            if not rest:
                if method == "GET":
                    self._advance(sim_time)
                    return 200, [self._status(j) for j in self.jobs.values()]
                if method == "POST":
                    return 201, self._submit(_body_json(body), sim_time)
            elif len(rest) == 1 and method == "GET":
                job = self._job(rest[0])
                self._advance(sim_time)
                return 200, self._status(job)
            elif len(rest) == 2 and rest[1] == "cancel" and method == "POST":
                return 200, self._cancel(self._job(rest[0]), sim_time)
        else:
            raise ApiError(404, f"no route for {path}")
        raise ApiError(405, f"{method} not allowed on {path}")

    @staticmethod
    def _sim_time(headers: dict) -> int | None:
        raw = headers.get("x-sim-time")
        if raw is None:
            return None
        try:
            t = int(raw)
        except ValueError:
            raise ApiError(400, "X-Sim-Time must be an integer") from None
        if t < 0:
            raise ApiError(400, "X-Sim-Time must be >= 0")
        return t

    def _advance(self, t: int | None) -> None:
        if t is None:
            return
        if t < self.sim.clock:
            raise ApiError(400, f"X-Sim-Time {t} is before the simulation clock {self.sim.clock}")
        self.sim.engine.run_until(t)

    # registries

    def _registry(self, resource: str) -> dict:
        return {"systems": self.systems, "storage": self.storage, "apps": self.apps}[resource]

    def _create(self, resource: str, doc: Any) -> dict:
        if not isinstance(doc, dict):
            raise ApiError(400, "body must be a JSON object")
        ident = _require_id(doc)
        registry = self._registry(resource)
        if ident in registry:
            raise ApiError(409, f"{resource} id {ident!r} already exists")
        if resource == "systems":
            kind = doc.get("kind")
            if kind not in (HPC, CLOUD):
                raise ApiError(400, "system kind must be 'hpc' or 'cloud'")
            entity = ExecutionSystem(ident, kind, str(doc.get("description", "")))
        elif resource == "storage":
            entity = StorageSystem(ident, str(doc.get("root_path", "/")), str(doc.get("description", "")))
        else:
            entity = self._app_from(ident, doc)
        registry[ident] = entity
        return entity.to_dict()

    def _app_from(self, ident: str, doc: dict) -> AppRegistration:
        name = doc.get("name", ident)
        profile = doc.get("profile", name)
        if profile not in self.sim.apps:
            raise ApiError(400, f"no application profile {profile!r}")
        version = str(doc.get("version", self.sim.apps[profile].version))
        if any(a.name == name and a.version == version for a in self.apps.values()):
            raise ApiError(409, f"app {name} {version} already registered")
        default_system = doc.get("default_system")
        if default_system is not None and default_system not in self.systems:
            raise ApiError(404, f"unknown system {default_system!r}")
        return AppRegistration(ident, str(name), version, profile, default_system)

    # jobs

    def _job(self, job_id: str) -> GatewayJob:
        job = self.jobs.get(job_id)
        if job is None:
            raise ApiError(404, f"unknown job {job_id!r}")
        return job

    def _submit(self, doc: Any, sim_time: int | None) -> dict:
        if not isinstance(doc, dict):
            raise ApiError(400, "body must be a JSON object")
        app = self.apps.get(doc.get("app"))
        if app is None:
            raise ApiError(404, f"unknown app {doc.get('app')!r}")
        params = doc.get("parameters", {})
        if not isinstance(params, dict):
            raise ApiError(400, "parameters must be an object")
        profile = self.sim.apps[app.profile]
        nodes = _positive_int(params, "nodes", profile.reference_nodes)
        tpn = _positive_int(params, "tasks_per_node", 1)
        walltime = _positive_int(params, "req_walltime_s")
        base = _positive_int(params, "base_runtime_s", profile.base_runtime_s)
        target = doc.get("target", app.default_system or AUTO)
        if target != AUTO and target not in self.systems:
            raise ApiError(404, f"unknown system {target!r}")
        kind = AUTO if target == AUTO else self.systems[target].kind
        if "id" in doc:
            job_id = _require_id(doc)
        else:
            job_id = f"job-{self._next_job:06d}"
            self._next_job += 1
        if job_id in self.jobs or job_id in self.sim.jobs:
            raise ApiError(409, f"job id {job_id!r} already exists")

        t = self.sim.clock if sim_time is None else sim_time
        if t < self.sim.clock:
            raise ApiError(400, f"X-Sim-Time {t} is before the simulation clock {self.sim.clock}")
        job = Job(job_id, t, app.profile, nodes, walltime, base, str(doc.get("user", "anon")), tpn, kind)
        gj = GatewayJob(job_id, app.id, {"nodes": nodes, "tasks_per_node": tpn, "req_walltime_s": walltime,
                                         "base_runtime_s": base}, target)
        gj.provenance = {
            "inputs": doc.get("inputs", {}),
            "app": app.id,
            "app_name": app.name,
            "app_version": app.version,
            "submit_time_s": t,
        }
        try:
            self.sim.submit(job, t, pinned=None if kind == AUTO else kind)
        except (BurstSimError, ValueError) as exc:
            raise ApiError(400, str(exc)) from None
        self.jobs[job_id] = gj
        gj.advance("SUBMITTED")
        if sim_time is None and self.blocking:
            self.sim.run_until_settled(job_id)
        return self._status(gj)

    def _cancel(self, gj: GatewayJob, sim_time: int | None) -> dict:
        self._advance(sim_time)
        if gj.id not in self.sim.router.registry:
            # the arrival is queued at the current instant; let it land first
            self.sim.engine.run_until(self.sim.clock)
        cancelled = self.sim.cancel(gj.id)
        status = self._status(gj)
        return {"cancelled": cancelled, "job": status}

    def _system_for(self, kind: str, target: str) -> str:
        if target != AUTO:
            return target
        for s in self.systems.values():
            if s.kind == kind:
                return s.id
        return self.sim.cluster(kind).name

    def _status(self, gj: GatewayJob) -> dict:
        if gj.frozen:
            return gj.to_dict()
        rec = self.sim.router.registry.get(gj.id)
        if rec is not None:
            if rec.rejected:
                gj.advance("FAILED")
                gj.provenance["reason"] = rec.rejected
            else:
                gj.advance("QUEUED")
                if rec.decision is not None:
                    gj.provenance["policy"] = rec.decision.policy_name
                    gj.provenance["targets"] = list(rec.decision.targets)
                winner = rec.executed()
                if winner is not None:
                    kind = rec.winner
                    gj.provenance["chosen_system"] = self._system_for(kind, gj.target)
                    gj.provenance["cluster_kind"] = kind
                    gj.provenance["start_time_s"] = winner.start_time
                    if winner.state is EntryState.RUNNING:
                        gj.advance("RUNNING")
                    elif winner.state is EntryState.FINISHED:
                        gj.provenance["end_time_s"] = winner.end_time
                        gj.advance("FINISHED")
                    elif winner.state is EntryState.WALLTIME_KILLED:
                        gj.provenance["end_time_s"] = winner.end_time
                        gj.provenance["reason"] = "walltime exceeded"
                        gj.advance("FAILED")
                elif rec.copies and all(c.state is EntryState.CANCELLED for c in rec.copies.values()):
                    gj.provenance["end_time_s"] = max(c.end_time for c in rec.copies.values())
                    gj.advance("CANCELLED")
        if gj.status in TERMINAL_STATUSES:
            gj.frozen = True
        return gj.to_dict()


class _Handler(BaseHTTPRequestHandler):
    service: GatewayService

    def _respond(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else None
        status, doc = self.service.handle(self.command, self.path, dict(self.headers.items()), body)
        data = (json.dumps(doc, sort_keys=True) + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    do_GET = _respond
    do_POST = _respond

    def log_message(self, format, *args):  # noqa: A002 - signature fixed by the base class
        pass


def make_server(service: GatewayService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("GatewayHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


__all__ = [
    "ApiError",
    "AppRegistration",
    "ExecutionSystem",
    "GatewayJob",
    "GatewayService",
    "StorageSystem",
    "make_server",
]

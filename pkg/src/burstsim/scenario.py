"""Scenario files: one YAML document describing clusters, policy, apps and trace.

Relative paths inside a scenario resolve against the scenario file's
directory. ``default`` and ``overload`` name the scenarios shipped with the
package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .cloud import AutoscalerConfig, CloudConfig
from .engine import seeded_rng
from .errors import BurstSimError, ConfigError
from .hpc import HpcConfig
from .router import Policy, WaitTable
from .workload import AppProfile, Trace, default_apps, load_apps, load_trace_jsonl, load_trace_swf, synth_workload

TOP_KEYS = {"name", "seed", "horizon_s", "hpc", "cloud", "autoscaler", "policy", "apps", "trace"}
TRACE_KINDS = ("jsonl", "swf", "synthetic")
BUILTIN = {"default": "default_scenario.yaml", "overload": "overload_scenario.yaml"}


@dataclass
class TraceSpec:
    kind: str
    path: Path | None = None
    params: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path) -> "TraceSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in TRACE_KINDS:
            raise ConfigError(f"trace.kind must be one of {TRACE_KINDS}, got {kind!r}")
        path = d.pop("path", None)
        if kind != "synthetic":
            if path is None:
                raise ConfigError(f"trace.path is required for {kind} traces")
            path = (base_dir / path).resolve()
            if not path.is_file():
                raise ConfigError(f"trace file not found: {path}")
        return cls(kind, path, d)


@dataclass
class Scenario:
    hpc: HpcConfig
    cloud: CloudConfig
    autoscaler: AutoscalerConfig
    policy: Policy
    apps: dict[str, AppProfile]
    trace: TraceSpec
    seed: int | None = None
    horizon_s: int | None = None
    name: str = "scenario"
    wait_table_path: Path | None = None

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: Path | str = ".") -> "Scenario":
        base_dir = Path(base_dir)
        if not isinstance(doc, Mapping):
            raise ConfigError("scenario must be a mapping")
        unknown = set(doc) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            hpc = HpcConfig.from_dict(doc.get("hpc") or {})
            cloud = CloudConfig.from_dict(doc.get("cloud") or {})
            autoscaler = AutoscalerConfig.from_dict(doc.get("autoscaler") or {})
            pdoc = dict(doc.get("policy") or {})
            table_path = pdoc.pop("wait_table_path", None)
            policy = Policy.from_dict(pdoc)
            apps = load_apps(doc["apps"]) if doc.get("apps") else default_apps()
        except BurstSimError as exc:
            raise ConfigError(str(exc)) from exc
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        if table_path is not None:
            table_path = (base_dir / table_path).resolve()
            if not table_path.is_file():
                raise ConfigError(f"wait table not found: {table_path}")
        if "trace" not in doc:
            raise ConfigError("scenario needs a trace section")
        trace = TraceSpec.from_dict(doc["trace"], base_dir)
        seed = doc.get("seed")
        if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if trace.kind == "synthetic" and seed is None:
            raise ConfigError("synthetic traces need a seed")
        horizon = doc.get("horizon_s")
        if horizon is not None and (not isinstance(horizon, int) or horizon < 0):
            raise ConfigError("horizon_s must be a non-negative integer")
        return cls(hpc, cloud, autoscaler, policy, apps, trace, seed, horizon, str(doc.get("name", "scenario")), table_path)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        if str(path) in BUILTIN:
            path = builtin_path(str(path))
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"scenario {path} is not valid YAML: {exc}") from exc
        return cls.from_dict(doc or {}, path.parent)

    def wait_table(self) -> WaitTable:
        return WaitTable.load(self.wait_table_path)

    def build_trace(self, seed: int | None = None) -> Trace:
        """Realise the trace; synthetic traces draw from a stream seeded by ``seed`` (default: scenario seed)."""
        spec = self.trace
        try:
            if spec.kind == "jsonl":
                trace = load_trace_jsonl(spec.path)
            elif spec.kind == "swf":
                trace = load_trace_swf(spec.path, int(spec.params.get("cores_per_node", self.hpc.cores_per_node)),
                                       str(spec.params.get("app", "generic")))
            else:
                p = spec.params
                trace = synth_workload(
                    float(p["rate_jobs_per_hour"]),
                    int(p["duration_s"]),
                    {int(k): v for k, v in p["node_dist"].items()},
                    {int(k): v for k, v in p["walltime_dist"].items()},
                    dict(p["app_mix"]),
                    seeded_rng(self.seed if seed is None else seed),
                    tuple(p.get("runtime_fraction", (0.2, 1.0))),
                )
        except BurstSimError as exc:
            raise ConfigError(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid trace section: {exc}") from exc
        unknown = sorted({j.app for j in trace.jobs} - set(self.apps))
        if unknown:
            raise ConfigError(f"trace uses apps without a profile: {unknown}")
        return trace


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("burstsim") / "data" / BUILTIN[name]))

"""Discrete-event simulator for bursting HPC batch work onto an elastic cloud cluster."""

from .cloud import Autoscaler, AutoscalerConfig, CloudCluster, CloudConfig, VmState
from .engine import Engine, EventKind, EventLog, seeded_rng
from .hpc import HpcCluster, HpcConfig
from .kernels import BACKEND
from .router import FederationRouter, Policy, PolicyVariant, WaitTable
from .scenario import Scenario
from .simulation import Simulation, SimResult
from .workload import AppProfile, Job, Trace, default_apps, load_trace_jsonl, load_trace_swf, synth_workload

__version__ = "0.1.0"

__all__ = [
    "AppProfile",
    "Autoscaler",
    "AutoscalerConfig",
    "BACKEND",
    "CloudCluster",
    "CloudConfig",
    "Engine",
    "EventKind",
    "EventLog",
    "FederationRouter",
    "HpcCluster",
    "HpcConfig",
    "Job",
    "Policy",
    "PolicyVariant",
    "Scenario",
    "SimResult",
    "Simulation",
    "Trace",
    "VmState",
    "WaitTable",
    "default_apps",
    "load_trace_jsonl",
    "load_trace_swf",
    "seeded_rng",
    "synth_workload",
]

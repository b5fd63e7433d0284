from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from burstsim.cloud import AutoscalerConfig, CloudConfig
from burstsim.hpc import HpcConfig
from burstsim.router import Policy
from burstsim.simulation import Simulation
from burstsim.workload import AppProfile, Job

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ZERO_LATENCY = {"boot": 0, "update": 0, "packages": 0, "mounts": 0, "scheduler": 0, "identity": 0}


def unit_apps(slowdown=1):
    return {"app": AppProfile("app", 100, Fraction(slowdown))}


def hpc_config(nodes, backfill=True):
    return HpcConfig(name="hpc", total_nodes=nodes, partitions={}, backfill_enabled=backfill)


def cloud_config(vms, max_vms=None, min_vms=None, latency=None, hosts=4, vcpus_per_host=48, vm_vcpus=2, initial=None,
                 oversubscription=1, backfill=True):
    max_vms = vms if max_vms is None else max_vms
    min_vms = vms if min_vms is None else min_vms
    return CloudConfig(
        name="cloud",
        host_count=hosts,
        vcpus_per_host=vcpus_per_host,
        oversubscription=oversubscription,
        vm_vcpus=vm_vcpus,
        stage_latencies_s=dict(latency) if latency is not None else dict(ZERO_LATENCY),
        min_vms=min_vms,
        max_vms=max_vms,
        initial_vms=initial,
        backfill_enabled=backfill,
    )


def make_sim(hpc_nodes=8, vms=4, policy="AlwaysHpc", jobs=(), apps=None, autoscaler=None, strict=True,
             horizon_s=None, backfill=True, **cloud_kw):
    return Simulation(
        hpc_config(hpc_nodes, backfill),
        cloud_config(vms, backfill=backfill, **cloud_kw),
        apps or unit_apps(),
        Policy.parse(policy) if isinstance(policy, str) else policy,
        autoscaler or AutoscalerConfig(),
        trace=list(jobs),
        horizon_s=horizon_s,
        strict=strict,
    )


def job(jid, submit=0, nodes=1, wall=100, run=None, app="app", hint="auto"):
    return Job(jid, submit, app, nodes, wall, wall if run is None else run, cluster_hint=hint)


@pytest.fixture
def mk_job():
    return job


_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        verdict, detail = _CRITERIA[name]
        num, label = name[len("test_criterion_"):].split("_", 1)
        terminalreporter.write_line(f"criterion {int(num):2d} {label:<24} {verdict}  {detail}")

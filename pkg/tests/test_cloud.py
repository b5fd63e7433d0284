from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from burstsim.cloud import (
    DEFAULT_STAGE_LATENCIES,
    Autoscaler,
    AutoscalerConfig,
    CloudCluster,
    CloudConfig,
    VmState,
)
from burstsim.engine import Engine
from burstsim.errors import AboveMax, ConfigError, PoolExhausted
from burstsim.workload import Job, default_apps

from conftest import cloud_config, job, make_sim, unit_apps
from oracles import log_capacity_violations


def pool(vms=0, max_vms=8, latency=DEFAULT_STAGE_LATENCIES, **kw):
    eng = Engine()
    cfg = cloud_config(vms, max_vms=max_vms, min_vms=kw.pop("min_vms", 0), latency=latency, initial=vms, **kw)
    return eng, CloudCluster(cfg, kw.pop("apps", unit_apps()), eng)


def test_config_limits():
    with pytest.raises(ConfigError):
        CloudConfig(vm_vcpus=45)
    with pytest.raises(ConfigError):
        CloudConfig(host_count=1, max_vms=25, min_vms=0)
    assert CloudConfig(host_count=1, max_vms=24, min_vms=0).pool_limit == 24
    assert CloudConfig(host_count=1, oversubscription="3/2", max_vms=36, min_vms=0).vms_per_host == 36
    with pytest.raises(ConfigError):
        CloudConfig(stage_latencies_s={"boot": 1})


def test_scale_up_reaches_ready_after_stage_sum():
    eng, cloud = pool()
    (vm,) = cloud.scale_up(1, 0)
    assert vm.state is VmState.REQUESTED
    eng.run_until(314)
    assert vm.state is VmState.CONFIGURING_IDENTITY
    eng.run_until(315)
    assert vm.state is VmState.READY
    stages = [e.payload["stage"] for e in eng.log]
    assert stages == ["requested", "boot", "update", "packages", "mounts", "scheduler", "identity"]
    assert [e.t for e in eng.log] == [0, 60, 180, 270, 285, 305, 315]


def test_scale_up_zero_and_limits():
    eng, cloud = pool(max_vms=3)
    assert cloud.scale_up(0, 0) == []
    with pytest.raises(AboveMax):
        cloud.scale_up(4, 0)


def test_first_fit_fills_host_then_next():
    eng, cloud = pool(max_vms=48, hosts=2)
    vms = cloud.scale_up(25, 0)
    assert [vm.host_id for vm in vms] == [0] * 24 + [1]
    eng, cloud = pool(max_vms=24, hosts=1)
    cloud.scale_up(24, 0)
    cloud.config.max_vms = 25  # bypass the config check to hit host capacity
    with pytest.raises(PoolExhausted):
        cloud.scale_up(1, 0)


def test_scale_down_prefers_idle_and_respects_floor():
    eng, cloud = pool(vms=5)
    eng.run_until(0)
    assert cloud.scale_down(2, 1) == 2
    assert len(cloud.idle_vms()) == 3
    eng, cloud = pool(vms=4, min_vms=4)
    eng.run_until(0)
    assert cloud.scale_down(1, 1) == 0


def test_busy_vm_drains_then_terminates_at_job_end():
    eng, cloud = pool(vms=1)
    eng.run_until(0)
    entry = cloud.submit(job("a", wall=100), 0)
    cloud.try_schedule(0)
    (vm,) = cloud.vms.values()
    assert vm.state is VmState.BUSY
    assert cloud.scale_down(1, 10) == 1
    assert vm.state is VmState.DRAINING
    cloud.finish(entry, 100)
    assert vm.state is VmState.TERMINATED and cloud.vm_count() == 0


def test_job_waits_for_provisioning_vms():
    # 2 Ready + 2 provisioning Ready at t=315: a 4-VM job starts at 315
    sim = make_sim(1, vms=2, max_vms=4, min_vms=2, policy="AlwaysCloud", latency=DEFAULT_STAGE_LATENCIES,
                   jobs=[job("big", 0, 4, wall=1000)])
    sim.engine.run_until(0)
    sim.cloud.scale_up(2, 0)
    recs = sim.run().records
    assert recs[0].start_s == 315


def test_calibrated_cloud_runs():
    apps = default_apps()
    sim = make_sim(8, vms=8, policy="AlwaysCloud", apps=apps,
                   jobs=[Job("namd", 0, "NAMD", 8, 600, 160), Job("os", 1000, "OpenSeesSP", 1, 900, 226)])
    runs = {r.job_id: r.run_s for r in sim.run().records}
    assert runs == {"namd": 238, "os": 403}


def test_estimate_counts_hypothetical_scale_up():
    eng, cloud = pool(vms=0, max_vms=4)
    j = job("x", nodes=2, wall=50)
    assert cloud.estimate_start(j, 0) is None
    assert cloud.estimate_start(j, 0, assume_scale_up=True) == 315


def autoscaled(vms=2, **kw):
    eng, cloud = pool(vms=vms, max_vms=kw.pop("max_vms", 16), min_vms=kw.pop("min_vms", 0), latency=kw.pop("latency", None))
    return eng, cloud, Autoscaler(AutoscalerConfig(True, 60, kw.pop("headroom", 1.0), kw.pop("cooldown", 600)), cloud)


def test_autoscaler_scales_up_to_demand():
    eng, cloud, scaler = autoscaled(vms=2)
    eng.run_until(0)
    cloud.submit(job("a", nodes=6, wall=100), 0)
    action = scaler.tick(0)
    assert (action.kind, action.n, action.target) == ("up", 4, 6)


def test_autoscaler_scales_down_after_cooldown_only():
    eng, cloud, scaler = autoscaled(vms=0, cooldown=600)
    cloud.submit(job("a", nodes=3, wall=10), 0)
    assert scaler.tick(0).kind == "up"
    cloud.cancel("a", 1)
    eng.run_until(100)
    assert scaler.tick(120).kind == "hold"
    action = scaler.tick(600)
    assert action.kind == "down" and cloud.vm_count() == 0


def test_autoscaler_headroom_and_clamp():
    eng, cloud, scaler = autoscaled(vms=0, headroom=1.5, max_vms=8)
    cloud.submit(job("a", nodes=3, wall=10), 0)
    assert scaler.tick(0).n == 5  # ceil(3 * 1.5)
    eng2, cloud2, scaler2 = autoscaled(vms=0, max_vms=4)
    cloud2.submit(job("b", nodes=4, wall=10), 0)
    cloud2.submit(job("c", nodes=4, wall=10), 0)
    assert scaler2.tick(0).target == 4


@st.composite
def cloud_runs(draw):
    hosts = draw(st.integers(1, 3))
    vm_vcpus = draw(st.sampled_from([2, 4, 8, 16]))
    over = draw(st.sampled_from([Fraction(1), Fraction(3, 2), Fraction(2)]))
    per_host = int(48 * over // vm_vcpus)
    max_vms = draw(st.integers(1, min(12, hosts * per_host)))
    min_vms = draw(st.integers(0, max_vms))
    jobs = []
    t = 0
    for i in range(draw(st.integers(1, 15))):
        t += draw(st.integers(0, 400))
        jobs.append(job(f"j{i}", t, draw(st.integers(1, max_vms)), draw(st.integers(30, 900)), hint="cloud"))
    lat = {k: draw(st.integers(0, 40)) for k in DEFAULT_STAGE_LATENCIES}
    scaler = AutoscalerConfig(True, draw(st.sampled_from([30, 60])), draw(st.sampled_from([1.0, 1.5])),
                              draw(st.sampled_from([0, 120, 600])))
    return dict(hosts=hosts, vm_vcpus=vm_vcpus, oversubscription=over, max_vms=max_vms, min_vms=min_vms,
                latency=lat, jobs=jobs, autoscaler=scaler)


@given(cloud_runs())
def test_autoscaled_runs_keep_capacity_invariants(cfg):
    # strict mode checks invariants after every instant; the log is then re-checked independently
    sim = make_sim(4, vms=cfg["min_vms"], policy="AlwaysCloud", **cfg)
    sim.run()
    c = sim.cloud.config
    problems = log_capacity_violations(sim.log, {"default": 4}, c.vm_vcpus, c.host_vcpu_capacity, c.min_vms, c.max_vms)
    assert problems == []
    assert all(r.executed for r in sim.result().records)


def test_jobs_only_start_on_ready_vms():
    sim = make_sim(1, vms=0, max_vms=4, min_vms=0, policy="AlwaysCloud", latency=DEFAULT_STAGE_LATENCIES,
                   autoscaler=AutoscalerConfig(True, 60, 1.0, 600), jobs=[job("a", 5, 2, 100)])
    recs = sim.run().records
    # tick at 60 requests 2 VMs, Ready 315 s later
    assert recs[0].start_s == 375

import pytest
from hypothesis import given
from hypothesis import strategies as st

from burstsim.batch import EntryState
from burstsim.errors import ConfigError, IllegalTransition, JobTooLarge
from burstsim.hpc import HpcCluster, HpcConfig
from burstsim.workload import default_apps

from conftest import job, make_sim, unit_apps
from oracles import fcfs_brute_force


def starts_of(sim):
    return {r.job_id: r.start_s for r in sim.run().records if r.cluster == "hpc"}


def ends_of(sim):
    return {r.job_id: (r.start_s, r.end_s, r.outcome) for r in sim.run().records}


def test_config_validation():
    with pytest.raises(ConfigError):
        HpcConfig(total_nodes=10, partitions={"a": 8, "b": 8})
    with pytest.raises(ConfigError):
        HpcConfig(total_nodes=10, partitions={"a": 8}, default_partition="b")
    with pytest.raises(ConfigError):
        HpcConfig.from_dict({"nodes": 3})
    assert HpcConfig(total_nodes=7, partitions={}).partition_sizes() == {"default": 7}


def test_too_large_job_rejected_at_submit():
    cluster = HpcCluster(HpcConfig(total_nodes=4, partitions={}), unit_apps())
    with pytest.raises(JobTooLarge):
        cluster.submit(job("big", nodes=5), 0)


def test_partition_capacity_is_separate():
    cfg = HpcConfig(total_nodes=6, partitions={"a": 2, "b": 4}, default_partition="b")
    cluster = HpcCluster(cfg, unit_apps())
    from burstsim.workload import Job

    e1 = cluster.submit(Job("x", 0, "app", 2, 10, 10, partition="a"), 0)
    e2 = cluster.submit(Job("y", 0, "app", 4, 10, 10), 0)
    started = cluster.try_schedule(0)
    assert started == [e1, e2] and (e1.partition, e2.partition) == ("a", "b")
    with pytest.raises(JobTooLarge):
        cluster.submit(Job("z", 0, "app", 3, 10, 10, partition="a"), 0)


def test_fcfs_then_end_releases_nodes():
    sim = make_sim(4, jobs=[job("a", 0, 4, 100), job("b", 0, 4, 50), job("c", 10, 1, 30)], backfill=False)
    assert starts_of(sim) == {"a": 0, "b": 100, "c": 150}


def test_backfill_uses_idle_nodes_without_delaying_head():
    jobs = [job("a", 0, 2, 100), job("h", 1, 4, 10), job("s", 2, 2, 50), job("l", 3, 2, 200)]
    s = starts_of(make_sim(4, jobs=jobs))
    assert s["s"] == 2 and s["h"] == 100 and s["l"] == 110


def test_walltime_kill_outcome():
    sim = make_sim(2, jobs=[job("k", 0, 1, wall=60, run=90)])
    ((start, end, outcome),) = ends_of(sim).values()
    assert (start, end, outcome) == (0, 60, "WalltimeKilled")


def test_finish_must_match_expected_end_and_cancel_only_pending():
    cluster = HpcCluster(HpcConfig(total_nodes=2, partitions={}), unit_apps())
    e = cluster.submit(job("a", nodes=2, wall=10), 0)
    q = cluster.submit(job("b", nodes=1, wall=10), 0)
    cluster.try_schedule(0)
    assert e.state is EntryState.RUNNING
    with pytest.raises(IllegalTransition):
        cluster.finish(e, 5)
    assert cluster.cancel("a", 1) is False
    assert cluster.cancel("b", 1) is True and q.state is EntryState.CANCELLED
    assert cluster.cancel("b", 2) is False
    cluster.finish(e, 10)
    with pytest.raises(IllegalTransition):
        cluster.finish(e, 10)


def test_early_finish_lets_queue_move_up():
    sim = make_sim(2, jobs=[job("a", 0, 2, wall=100, run=30), job("b", 5, 2, 10)])
    assert starts_of(sim)["b"] == 30


@st.composite
def exact_instances(draw, max_nodes=8, max_jobs=12):
    cap = draw(st.integers(1, max_nodes))
    n = draw(st.integers(1, max_jobs))
    jobs = []
    t = 0
    for i in range(n):
        t += draw(st.integers(0, 20))
        jobs.append((t, draw(st.integers(1, cap)), draw(st.integers(1, 60))))
    return cap, jobs


@given(exact_instances())
def test_estimate_start_is_exact_when_jobs_run_to_walltime(inst):
    cap, jobs = inst
    # submit everything at t=0 so there are no later arrivals, then predict the last job
    first = [job(f"j{i}", 0, n, w) for i, (_, n, w) in enumerate(jobs[:-1])]
    sim = make_sim(cap, jobs=first)
    sim.engine.run_until(0)
    _, n, w = jobs[-1]
    probe = job("probe", 0, n, w)
    predicted = sim.hpc.estimate_start(probe, 0)
    sim.submit(probe, 0)
    assert starts_of(sim)["probe"] == predicted


@given(exact_instances())
def test_no_backfill_schedule_matches_brute_force(inst):
    cap, jobs = inst
    trace = [job(f"j{i:02d}", t, n, w) for i, (t, n, w) in enumerate(jobs)]
    got = starts_of(make_sim(cap, jobs=trace, backfill=False))
    want = fcfs_brute_force(cap, jobs)
    assert [got[f"j{i:02d}"] for i in range(len(jobs))] == want


def first_blocked(starts, jobs):
    for i, (t, _, _) in enumerate(jobs):
        if starts[i] > t:
            return i
    return None


@given(exact_instances())
def test_easy_never_delays_first_blocked_head(inst):
    cap, jobs = inst
    trace = [job(f"j{i:02d}", t, n, w) for i, (t, n, w) in enumerate(jobs)]
    got = starts_of(make_sim(cap, jobs=trace))
    easy = [got[f"j{i:02d}"] for i in range(len(jobs))]
    fcfs = fcfs_brute_force(cap, jobs)
    head = first_blocked(easy, jobs)
    if head is not None:
        assert easy[head] <= fcfs[head]


def test_early_finish_counterexample_to_head_safety():
    # J1 reserves 2 nodes until t=100 but ends at 10. EASY backfills J3 (ends t=50)
    # against that reservation, so the head starts at 50; plain FCFS starts it at 10.
    jobs = [job("j1", 0, 2, wall=100, run=10), job("h", 0, 4, 10), job("j3", 0, 2, 50)]
    assert starts_of(make_sim(4, jobs=jobs))["h"] == 50
    assert starts_of(make_sim(4, jobs=jobs, backfill=False))["h"] == 10


def test_default_config_matches_calibration_system():
    cfg = HpcConfig()
    assert (cfg.total_nodes, cfg.partitions["skx"], cfg.default_partition) == (5936, 1736, "skx")
    assert HpcCluster(cfg, default_apps()).free_nodes("skx") == 1736

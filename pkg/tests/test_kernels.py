import pytest
from hypothesis import given
from hypothesis import strategies as st

from burstsim import _kernels_py, kernels
from oracles import fcfs_brute_force

try:
    from burstsim import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


@st.composite
def partitions(draw):
    cap = draw(st.integers(1, 16))
    now = draw(st.integers(0, 100))
    running = draw(st.lists(st.tuples(st.integers(now, now + 200), st.integers(1, 4)), max_size=6))
    used = sum(n for _, n in running)
    if used > cap:
        running, used = [], 0
    pend = draw(st.lists(st.tuples(st.integers(1, cap), st.integers(1, 150)), max_size=12))
    return (now, cap - used, [t for t, _ in running], [n for _, n in running],
            [n for n, _ in pend], [w for _, w in pend])


@needs_ext
@given(partitions(), st.booleans())
def test_compiled_matches_python(args, backfill):
    assert compiled.easy_pass(*args, backfill) == _kernels_py.easy_pass(*args, backfill)
    assert compiled.project_starts(*args, backfill) == _kernels_py.project_starts(*args, backfill)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if compiled is not None:
        assert kernels.BACKEND == "cython"


@given(partitions(), st.booleans())
def test_easy_pass_respects_free_nodes_and_fcfs_prefix(args, backfill):
    now, free, rel_t, rel_n, pend_n, pend_w = args
    idx = kernels.easy_pass(now, free, rel_t, rel_n, pend_n, pend_w, backfill)
    assert len(set(idx)) == len(idx)
    assert sum(pend_n[i] for i in idx) <= free
    # the started set always begins with the FCFS prefix that fits
    k, room = 0, free
    while k < len(pend_n) and pend_n[k] <= room:
        room -= pend_n[k]
        k += 1
    assert idx[:k] == list(range(k))
    if not backfill:
        assert idx == list(range(k))


def test_easy_backfills_short_job_before_shadow():
    # 4 nodes, 2 busy until t=100; head wants 4; a 2-node 50 s job fits before the shadow
    assert kernels.easy_pass(0, 2, [100], [2], [4, 2], [10, 50], True) == [1]
    # a 2-node 150 s job would delay the head and extra is zero
    assert kernels.easy_pass(0, 2, [100], [2], [4, 2], [10, 150], True) == []
    assert kernels.easy_pass(0, 2, [100], [2], [4, 2], [10, 50], False) == []


def test_extra_counts_every_release_at_the_shadow_time():
    # 1 node free, two 1-node releases at t=50; the 2-node head leaves one extra node then
    assert kernels.easy_pass(0, 1, [50, 50], [1, 1], [2, 1], [10, 500], True) == [1]


@given(st.integers(1, 8), st.lists(st.tuples(st.integers(1, 8), st.integers(1, 30)), min_size=1, max_size=12))
def test_projection_without_backfill_matches_fcfs_oracle(cap, pend):
    pend = [(min(n, cap), w) for n, w in pend]
    starts = kernels.project_starts(0, cap, [], [], [n for n, _ in pend], [w for _, w in pend], False)
    assert starts == fcfs_brute_force(cap, [(0, n, w) for n, w in pend])


def test_projection_reports_never_fitting_job():
    assert kernels.project_starts(0, 2, [], [], [3, 1], [10, 10], True) == [-1, 0]

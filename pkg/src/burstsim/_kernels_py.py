"""Pure-Python scheduling kernels (fallback for the compiled ``_kernels``).

Both kernels work on one partition described by plain integer lists:

``releases``  (rel_t, rel_n): nodes currently committed that come back at a
              known time (running jobs at their walltime expiry, VMs that finish
              provisioning).
``pending``   (pend_n, pend_w): queued jobs in FCFS order, node count and
              requested walltime.
"""

import heapq

INF = 2**62


def easy_pass(now, free, rel_t, rel_n, pend_n, pend_w, backfill):
    """One FCFS + EASY-backfill pass at time ``now``.

    Returns the indices of ``pending`` that start now, in start order.
    """
    started = []
    npend = len(pend_n)
    i = 0
    rel = list(zip(rel_t, rel_n))
    while i < npend and pend_n[i] <= free:
        started.append(i)
        free -= pend_n[i]
        rel.append((now + pend_w[i], pend_n[i]))
        i += 1
    if i >= npend or not backfill:
        return started

    head = pend_n[i]
    rel.sort()
    avail = free
    shadow = INF
    extra = 0
    for t, n in rel:
        if shadow != INF and t > shadow:
            break
        avail += n
        if shadow == INF and avail >= head:
            shadow = t
    if shadow != INF:
        extra = avail - head

    for j in range(i + 1, npend):
        n = pend_n[j]
        if n > free:
            continue
        if now + pend_w[j] <= shadow:
            started.append(j)
            free -= n
        elif n <= extra:
            started.append(j)
            free -= n
            extra -= n
    return started


def project_starts(now, free, rel_t, rel_n, pend_n, pend_w, backfill):
    """Start time of every pending job assuming each runs to its walltime.

    No further arrivals are assumed. Jobs that can never start get -1.
    """
    npend = len(pend_n)
    starts = [-1] * npend
    future = []
    for t, n in zip(rel_t, rel_n):
        if t <= now:
            free += n
        else:
            future.append((t, n))
    heapq.heapify(future)
    remaining = list(range(npend))
    t = now
    while remaining:
        sub_n = [pend_n[k] for k in remaining]
        sub_w = [pend_w[k] for k in remaining]
        ft = [x[0] for x in future]
        fn = [x[1] for x in future]
        idx = easy_pass(t, free, ft, fn, sub_n, sub_w, backfill)
        if idx:
            taken = set()
            for local in idx:
                k = remaining[local]
                starts[k] = t
                free -= pend_n[k]
                heapq.heappush(future, (t + pend_w[k], pend_n[k]))
                taken.add(local)
            remaining = [k for pos, k in enumerate(remaining) if pos not in taken]
            if not remaining:
                break
        if not future:
            break
        t = future[0][0]
        while future and future[0][0] == t:
            free += heapq.heappop(future)[1]
    return starts

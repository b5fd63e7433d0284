# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scheduling kernels. Same contracts as ``_kernels_py``."""

from libc.stdlib cimport malloc, free as cfree, qsort

ctypedef long long i64

cdef i64 INF = 2**62

cdef struct Rel:
    i64 t
    i64 n


cdef int _rel_cmp(const void* a, const void* b) noexcept nogil:
    cdef const Rel* x = <const Rel*>a
    cdef const Rel* y = <const Rel*>b
    if x.t < y.t:
        return -1
    if x.t > y.t:
        return 1
    if x.n < y.n:
        return -1
    if x.n > y.n:
        return 1
    return 0


cdef Py_ssize_t _easy_core(i64 now, i64 free_nodes, Rel* rel, Py_ssize_t nrel,
                           i64* pend_n, i64* pend_w, Py_ssize_t npend,
                           bint backfill, Py_ssize_t* out) noexcept nogil:
    # rel must have room for nrel + npend entries
    cdef Py_ssize_t i = 0, j, nout = 0, r
    cdef i64 head, avail, shadow, extra, n
    while i < npend and pend_n[i] <= free_nodes:
        out[nout] = i
        nout += 1
        free_nodes -= pend_n[i]
        rel[nrel].t = now + pend_w[i]
        rel[nrel].n = pend_n[i]
        nrel += 1
        i += 1
    if i >= npend or not backfill:
        return nout
    head = pend_n[i]
    qsort(rel, nrel, sizeof(Rel), _rel_cmp)
    avail = free_nodes
    shadow = INF
    extra = 0
    for r in range(nrel):
        if shadow != INF and rel[r].t > shadow:
            break
        avail += rel[r].n
        if shadow == INF and avail >= head:
            shadow = rel[r].t
    if shadow != INF:
        extra = avail - head
    for j in range(i + 1, npend):
        n = pend_n[j]
        if n > free_nodes:
            continue
        if now + pend_w[j] <= shadow:
            out[nout] = j
            nout += 1
            free_nodes -= n
        elif n <= extra:
            out[nout] = j
            nout += 1
            free_nodes -= n
            extra -= n
    return nout


def easy_pass(i64 now, i64 free, rel_t, rel_n, pend_n, pend_w, bint backfill):
    cdef Py_ssize_t nrel = len(rel_t), npend = len(pend_n), k, nout
    cdef Rel* rel = <Rel*>malloc((nrel + npend + 1) * sizeof(Rel))
    cdef i64* pn = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef i64* pw = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef Py_ssize_t* out = <Py_ssize_t*>malloc((npend + 1) * sizeof(Py_ssize_t))
    if rel == NULL or pn == NULL or pw == NULL or out == NULL:
        cfree(rel); cfree(pn); cfree(pw); cfree(out)
        raise MemoryError()
    try:
        for k in range(nrel):
            rel[k].t = rel_t[k]
            rel[k].n = rel_n[k]
        for k in range(npend):
            pn[k] = pend_n[k]
            pw[k] = pend_w[k]
        nout = _easy_core(now, free, rel, nrel, pn, pw, npend, backfill, out)
        return [out[k] for k in range(nout)]
    finally:
        cfree(rel); cfree(pn); cfree(pw); cfree(out)


def project_starts(i64 now, i64 free, rel_t, rel_n, pend_n, pend_w, bint backfill):
    cdef Py_ssize_t nrel0 = len(rel_t), npend = len(pend_n)
    cdef Py_ssize_t cap = nrel0 + npend + 1
    cdef Py_ssize_t k, nfut = 0, nrem, nout, w, local, r
    cdef i64 t = now, free_nodes = free, nxt
    # future releases: unsorted array, extracted by linear min scan
    cdef Rel* fut = <Rel*>malloc(cap * sizeof(Rel))
    cdef Rel* scratch = <Rel*>malloc((cap + npend) * sizeof(Rel))
    cdef i64* pn = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef i64* pw = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef i64* sn = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef i64* sw = <i64*>malloc((npend + 1) * sizeof(i64))
    cdef Py_ssize_t* rem = <Py_ssize_t*>malloc((npend + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* out = <Py_ssize_t*>malloc((npend + 1) * sizeof(Py_ssize_t))
    cdef char* taken = <char*>malloc(npend + 1)
    cdef i64* starts = <i64*>malloc((npend + 1) * sizeof(i64))
    if (fut == NULL or scratch == NULL or pn == NULL or pw == NULL or sn == NULL
            or sw == NULL or rem == NULL or out == NULL or taken == NULL or starts == NULL):
        cfree(fut); cfree(scratch); cfree(pn); cfree(pw); cfree(sn); cfree(sw)
        cfree(rem); cfree(out); cfree(taken); cfree(starts)
        raise MemoryError()
    try:
        for k in range(nrel0):
            if rel_t[k] <= now:
                free_nodes += rel_n[k]
            else:
                fut[nfut].t = rel_t[k]
                fut[nfut].n = rel_n[k]
                nfut += 1
        for k in range(npend):
            pn[k] = pend_n[k]
            pw[k] = pend_w[k]
            rem[k] = k
            starts[k] = -1
        nrem = npend
        with nogil:
            while nrem > 0:
                for k in range(nrem):
                    sn[k] = pn[rem[k]]
                    sw[k] = pw[rem[k]]
                for k in range(nfut):
                    scratch[k] = fut[k]
                nout = _easy_core(t, free_nodes, scratch, nfut, sn, sw, nrem, backfill, out)
                if nout > 0:
                    for k in range(nrem):
                        taken[k] = 0
                    for k in range(nout):
                        local = out[k]
                        taken[local] = 1
                        starts[rem[local]] = t
                        free_nodes -= pn[rem[local]]
                        fut[nfut].t = t + pw[rem[local]]
                        fut[nfut].n = pn[rem[local]]
                        nfut += 1
                    w = 0
                    for k in range(nrem):
                        if not taken[k]:
                            rem[w] = rem[k]
                            w += 1
                    nrem = w
                    if nrem == 0:
                        break
                if nfut == 0:
                    break
                nxt = fut[0].t
                for r in range(1, nfut):
                    if fut[r].t < nxt:
                        nxt = fut[r].t
                t = nxt
                w = 0
                for r in range(nfut):
                    if fut[r].t == t:
                        free_nodes += fut[r].n
                    else:
                        fut[w] = fut[r]
                        w += 1
                nfut = w
        return [starts[k] for k in range(npend)]
    finally:
        cfree(fut); cfree(scratch); cfree(pn); cfree(pw); cfree(sn); cfree(sw)
        cfree(rem); cfree(out); cfree(taken); cfree(starts)

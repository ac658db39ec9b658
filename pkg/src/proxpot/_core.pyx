# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: k-hop layering, BFS, static allocation, dynamic event loop.

Behaviour is defined by ``_pycore``; keep the two files in lockstep.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, fabs
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

cnp.import_array()

cdef enum:
    KIND_POT = 0
    KIND_LAYERED = 1
    KIND_NONE = 2

cdef enum:
    DIST_MATRIX = 0
    DIST_LINE = 1
    DIST_RING = 2
    DIST_UNKNOWN = 3


cdef inline bitgen_t* _bitgen(object bit_generator) except NULL:
    return <bitgen_t*>PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


cdef inline double _u(bitgen_t* rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef struct Sampler:
    int kind
    Py_ssize_t n
    const int* order
    const long long* optr
    const double* lcum
    const int* lsize
    const long long* lstart
    const long long* lptr
    int dist_mode
    const long long* rank
    const int* distmat


cdef object _bind(dict s, Sampler* sp):
    """Fill ``sp`` with pointers into the arrays of ``s``; returns keep-alive refs."""
    cdef cnp.ndarray order = np.ascontiguousarray(s["order"], dtype=np.int32)
    cdef cnp.ndarray optr = np.ascontiguousarray(s["optr"], dtype=np.int64)
    cdef cnp.ndarray lcum = np.ascontiguousarray(s["lcum"], dtype=np.float64)
    cdef cnp.ndarray lsize = np.ascontiguousarray(s["lsize"], dtype=np.int32)
    cdef cnp.ndarray lstart = np.ascontiguousarray(s["lstart"], dtype=np.int64)
    cdef cnp.ndarray lptr = np.ascontiguousarray(s["lptr"], dtype=np.int64)
    cdef cnp.ndarray rank = np.ascontiguousarray(s["rank"], dtype=np.int64)
    distmat = s["distmat"]
    if distmat is None:
        distmat = np.zeros((1, 1), dtype=np.int32)
    cdef cnp.ndarray dm = np.ascontiguousarray(distmat, dtype=np.int32)
    sp.kind = s["kind"]
    sp.n = s["n"]
    sp.order = <const int*>cnp.PyArray_DATA(order)
    sp.optr = <const long long*>cnp.PyArray_DATA(optr)
    sp.lcum = <const double*>cnp.PyArray_DATA(lcum)
    sp.lsize = <const int*>cnp.PyArray_DATA(lsize)
    sp.lstart = <const long long*>cnp.PyArray_DATA(lstart)
    sp.lptr = <const long long*>cnp.PyArray_DATA(lptr)
    sp.dist_mode = s["dist_mode"]
    sp.rank = <const long long*>cnp.PyArray_DATA(rank)
    sp.distmat = <const int*>cnp.PyArray_DATA(dm)
    return (order, optr, lcum, lsize, lstart, lptr, rank, dm)


cdef inline int _pot_hop(Sampler* sp, Py_ssize_t u, Py_ssize_t v) noexcept nogil:
    cdef long long d
    if sp.dist_mode == DIST_MATRIX:
        return sp.distmat[u * sp.n + v]
    if sp.dist_mode == DIST_UNKNOWN:
        return -1
    d = sp.rank[u] - sp.rank[v]
    if d < 0:
        d = -d
    if sp.dist_mode == DIST_RING and sp.n - d < d:
        d = sp.n - d
    return <int>d


cdef inline Py_ssize_t _draw(Sampler* sp, Py_ssize_t u, double x, int* hop) noexcept nogil:
    cdef Py_ssize_t v, a, b, mid, lo, j, size
    cdef double prev
    if sp.kind == KIND_POT:
        v = <Py_ssize_t>(x * (sp.n - 1))
        if v > sp.n - 2:
            v = sp.n - 2
        if v >= u:
            v += 1
        hop[0] = _pot_hop(sp, u, v)
        return v
    lo = sp.lptr[u]
    a = lo
    b = sp.lptr[u + 1] - 1
    while a < b:
        mid = (a + b) // 2
        if sp.lcum[mid] > x:
            b = mid
        else:
            a = mid + 1
    prev = sp.lcum[a - 1] if a > lo else 0.0
    size = sp.lsize[a]
    j = <Py_ssize_t>((x - prev) / (sp.lcum[a] - prev) * size)
    if j >= size:
        j = size - 1
    elif j < 0:
        j = 0
    hop[0] = <int>(a - lo + 1)
    return sp.order[sp.optr[u] + sp.lstart[a] + j]


def khop_layers(const long long[::1] indptr, const int[::1] indices, long long k):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.int32_t] dist = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t] queue = np.empty(max(n, 1), dtype=np.int32)
    cdef int[::1] dv = dist
    cdef int[::1] qv = queue
    cdef Py_ssize_t cap = 16 * n + 16
    order = np.empty(cap, dtype=np.int32)
    cdef int[::1] ov = order
    cdef cnp.ndarray optr = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] opv = optr
    lsize_list = []
    lptr = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] lpv = lptr
    cdef Py_ssize_t u, w, x, e, head, tail, layer_end, total = 0, nl = 0, i
    cdef long long depth
    opv[0] = 0
    lpv[0] = 0
    sizes = np.empty(max(n, 1), dtype=np.int32)
    cdef int[::1] sv = sizes
    cdef Py_ssize_t ns
    for u in range(n):
        dv[u] = 0
        head = 0
        tail = 0
        qv[tail] = <int>u
        tail += 1
        depth = 0
        ns = 0
        while head < tail and depth < k:
            depth += 1
            layer_end = tail
            while head < layer_end:
                w = qv[head]
                head += 1
                for e in range(indptr[w], indptr[w + 1]):
                    x = indices[e]
                    if dv[x] < 0:
                        dv[x] = <int>depth
                        qv[tail] = <int>x
                        tail += 1
            if tail == layer_end:
                break
            sv[ns] = <int>(tail - layer_end)
            ns += 1
        # tail - 1 vertices besides u were reached
        if total + tail > cap:
            cap = max(2 * cap, total + tail)
            order = np.resize(order, cap)
            ov = order
        for i in range(1, tail):
            ov[total + i - 1] = qv[i]
        total += tail - 1
        for i in range(tail):
            dv[qv[i]] = -1
        opv[u + 1] = total
        lsize_list.append(sizes[:ns].copy())
        nl += ns
        lpv[u + 1] = nl
    lsize = np.concatenate(lsize_list).astype(np.int32) if nl else np.empty(0, dtype=np.int32)
    return order[:total].copy(), optr, lsize, lptr


def bfs_rows(const long long[::1] indptr, const int[::1] indices, sources):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef const long long[::1] src = np.ascontiguousarray(sources, dtype=np.int64)
    cdef Py_ssize_t ns = src.shape[0]
    out = np.full((ns, n), -1, dtype=np.int32)
    cdef int[:, ::1] ov = out
    cdef cnp.ndarray[cnp.int32_t] queue = np.empty(max(n, 1), dtype=np.int32)
    cdef int[::1] qv = queue
    cdef Py_ssize_t r, s, head, tail, w, x, e
    cdef int d
    with nogil:
        for r in range(ns):
            s = src[r]
            ov[r, s] = 0
            head = 0
            tail = 1
            qv[0] = <int>s
            while head < tail:
                w = qv[head]
                head += 1
                d = ov[r, w] + 1
                for e in range(indptr[w], indptr[w + 1]):
                    x = indices[e]
                    if ov[r, x] < 0:
                        ov[r, x] = d
                        qv[tail] = <int>x
                        tail += 1
    return out


def static_kernel(dict sampler, origins, Py_ssize_t runs, Py_ssize_t m, sample_bg, tie_bg,
                  loads_out, peers=None, dests=None, hops=None, levels=None):
    cdef Sampler sp
    keep = _bind(sampler, &sp)
    cdef bitgen_t* rs = _bitgen(sample_bg)
    cdef bitgen_t* rt = _bitgen(tie_bg)
    cdef const long long[::1] org = np.ascontiguousarray(origins, dtype=np.int64)
    cdef int[:, ::1] lo = loads_out
    cdef bint record = peers is not None
    cdef int[::1] pv, dv, hv, lv
    if record:
        pv = peers
        dv = dests
        hv = hops
        lv = levels
    cdef Py_ssize_t r, j, u, v, dest, base
    cdef int hop, hpeer, lu, lvv
    with sample_bg.lock, tie_bg.lock:
        with nogil:
            for r in range(runs):
                for j in range(sp.n):
                    lo[r, j] = 0
                base = r * m
                for j in range(m):
                    u = org[base + j]
                    if sp.kind == KIND_NONE:
                        v = u
                        dest = u
                        hop = 0
                    else:
                        v = _draw(&sp, u, _u(rs), &hpeer)
                        lu = lo[r, u]
                        lvv = lo[r, v]
                        if lu < lvv:
                            dest = u
                        elif lvv < lu:
                            dest = v
                        elif _u(rt) < 0.5:
                            dest = u
                        else:
                            dest = v
                        hop = 0 if dest == u else hpeer
                    if record:
                        pv[base + j] = <int>v
                        dv[base + j] = <int>dest
                        hv[base + j] = hop
                        lv[base + j] = lo[r, dest]
                    lo[r, dest] += 1
    return None


def tv_evolution(levels_a, levels_b, Py_ssize_t n):
    cdef const int[::1] la = np.ascontiguousarray(levels_a, dtype=np.int32)
    cdef const int[::1] lb = np.ascontiguousarray(levels_b, dtype=np.int32)
    cdef Py_ssize_t m = la.shape[0], t
    cdef cnp.ndarray[cnp.int64_t] diff = np.zeros(m + 2, dtype=np.int64)
    cdef long long[::1] dv = diff
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef long long total = 0, old
    cdef int lev, sign, which
    for t in range(m):
        for which in range(2):
            if which == 0:
                lev = la[t]
                sign = 1
            else:
                lev = lb[t]
                sign = -1
            old = dv[lev]
            dv[lev] = old - sign
            total += _iabs(old - sign) - _iabs(old)
            old = dv[lev + 1]
            dv[lev + 1] = old + sign
            total += _iabs(old + sign) - _iabs(old)
        ov[t] = total / (2.0 * n)
    return out


cdef inline long long _iabs(long long x) noexcept nogil:
    return -x if x < 0 else x


# ---- dynamic engine ---------------------------------------------------------

cdef inline void _heap_push(double* ht, int* hs, Py_ssize_t* size, double t, int s) noexcept nogil:
    cdef Py_ssize_t i = size[0], parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if ht[parent] <= t:
            break
        ht[i] = ht[parent]
        hs[i] = hs[parent]
        i = parent
    ht[i] = t
    hs[i] = s


cdef inline void _heap_pop(double* ht, int* hs, Py_ssize_t* size) noexcept nogil:
    cdef Py_ssize_t n = size[0] - 1, i = 0, c
    cdef double t = ht[n]
    cdef int s = hs[n]
    size[0] = n
    if n == 0:
        return
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and ht[c + 1] < ht[c]:
            c += 1
        if ht[c] >= t:
            break
        ht[i] = ht[c]
        hs[i] = hs[c]
        i = c
    ht[i] = t
    hs[i] = s


cdef class _DynState:
    """Growable per-server FIFO buffers and time-weighted accumulators."""
    cdef Py_ssize_t n, npairs, cap
    cdef object buf_t, buf_id, occ, joint
    cdef double[:, ::1] bt
    cdef long long[:, ::1] bid
    cdef double[:, ::1] ov
    cdef double[:, :, ::1] jv
    cdef long long[::1] head

    def __init__(self, Py_ssize_t n, Py_ssize_t npairs, Py_ssize_t cap):
        self.n = n
        self.npairs = npairs
        self.cap = cap
        self.buf_t = np.zeros((n, cap), dtype=np.float64)
        self.buf_id = np.zeros((n, cap), dtype=np.int64)
        self.occ = np.zeros((n, cap + 1), dtype=np.float64)
        self.joint = np.zeros((max(npairs, 1), cap + 1, cap + 1), dtype=np.float64)
        self.bt = self.buf_t
        self.bid = self.buf_id
        self.ov = self.occ
        self.jv = self.joint
        self.head = np.zeros(n, dtype=np.int64)

    cdef void grow(self, const long long[::1] cnt):
        cdef Py_ssize_t old = self.cap, new = 2 * self.cap, s, i, pos
        nbt = np.zeros((self.n, new), dtype=np.float64)
        nbid = np.zeros((self.n, new), dtype=np.int64)
        cdef double[:, ::1] nbtv = nbt
        cdef long long[:, ::1] nbidv = nbid
        for s in range(self.n):
            pos = self.head[s]
            for i in range(cnt[s]):
                nbtv[s, i] = self.bt[s, pos]
                nbidv[s, i] = self.bid[s, pos]
                pos += 1
                if pos == old:
                    pos = 0
            self.head[s] = 0
        nocc = np.zeros((self.n, new + 1), dtype=np.float64)
        nocc[:, : old + 1] = self.occ
        njoint = np.zeros((max(self.npairs, 1), new + 1, new + 1), dtype=np.float64)
        njoint[:, : old + 1, : old + 1] = self.joint
        self.buf_t = nbt
        self.buf_id = nbid
        self.occ = nocc
        self.joint = njoint
        self.bt = self.buf_t
        self.bid = self.buf_id
        self.ov = self.occ
        self.jv = self.joint
        self.cap = new


def dynamic_kernel(dict sampler, double lam, double mu, long long horizon, long long warmup,
                   arr_bg, samp_bg, tie_bg, svc_bg, pair_i, pair_j, bint record, bint check):
    cdef Sampler sp
    keep = _bind(sampler, &sp)
    cdef Py_ssize_t n = sp.n
    cdef bitgen_t* ra = _bitgen(arr_bg)
    cdef bitgen_t* rsm = _bitgen(samp_bg)
    cdef bitgen_t* rt = _bitgen(tie_bg)
    cdef bitgen_t* rsv = _bitgen(svc_bg)
    cdef double rate = n * lam
    cdef const long long[::1] pi = np.ascontiguousarray(pair_i, dtype=np.int64)
    cdef const long long[::1] pj = np.ascontiguousarray(pair_j, dtype=np.int64)
    cdef Py_ssize_t npairs = pi.shape[0], p, q

    # server -> tracked pairs, CSR
    pcount = np.zeros(n + 1, dtype=np.int64)
    for p in range(npairs):
        pcount[pi[p] + 1] += 1
        if pj[p] != pi[p]:
            pcount[pj[p] + 1] += 1
    pptr_arr = np.cumsum(pcount)
    pidx_arr = np.zeros(max(int(pptr_arr[n]), 1), dtype=np.int64)
    fill = pptr_arr[:n].copy()
    for p in range(npairs):
        pidx_arr[fill[pi[p]]] = p
        fill[pi[p]] += 1
        if pj[p] != pi[p]:
            pidx_arr[fill[pj[p]]] = p
            fill[pj[p]] += 1
    cdef const long long[::1] pptr = pptr_arr
    cdef const long long[::1] pidx = pidx_arr

    cdef _DynState st = _DynState(n, npairs, 16)
    cnt_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] cnt = cnt_arr
    heap_t_arr = np.empty(max(n, 1), dtype=np.float64)
    heap_s_arr = np.empty(max(n, 1), dtype=np.int32)
    cdef double[::1] heap_t = heap_t_arr
    cdef int[::1] heap_s = heap_s_arr
    cdef Py_ssize_t hsize = 0
    last_arr = np.zeros(n, dtype=np.float64)
    lastp_arr = np.zeros(max(npairs, 1), dtype=np.float64)
    cdef double[::1] last = last_arr
    cdef double[::1] lastp = lastp_arr

    cdef long long nrec = horizon - warmup
    cdef double[::1] rec_at, rec_dep
    cdef int[::1] rec_org, rec_dst, rec_hop
    if record:
        rec_at_a = np.empty(nrec, dtype=np.float64)
        rec_org_a = np.empty(nrec, dtype=np.int32)
        rec_dst_a = np.empty(nrec, dtype=np.int32)
        rec_hop_a = np.empty(nrec, dtype=np.int32)
        rec_dep_a = np.full(nrec, np.nan, dtype=np.float64)
        rec_at = rec_at_a
        rec_org = rec_org_a
        rec_dst = rec_dst_a
        rec_hop = rec_hop_a
        rec_dep = rec_dep_a

    cdef bint measuring = warmup == 0
    cdef double t_start = 0.0, t = 0.0, t_next, tt, at
    cdef long long arrivals = 0, departures = 0, busy = 0, soj_cnt = 0, hop_sum = 0
    cdef long long max_q = 0, jid, idx, lu, lvv, total_in
    cdef double soj_sum = 0.0
    cdef Py_ssize_t s, u, v, dest, pos, cap
    cdef int hpeer, hop

    with arr_bg.lock, samp_bg.lock, tie_bg.lock, svc_bg.lock:
        t_next = t + (-log1p(-_u(ra))) / rate
        while True:
            if hsize > 0 and heap_t[0] < t_next:
                tt = heap_t[0]
                s = heap_s[0]
                _heap_pop(&heap_t[0], &heap_s[0], &hsize)
                if check and tt < t:
                    raise RuntimeError("event time decreased")
                t = tt
                if measuring:
                    _touch(st, cnt, last, lastp, pptr, pidx, pi, pj, s, t)
                pos = st.head[s]
                at = st.bt[s, pos]
                jid = st.bid[s, pos]
                pos += 1
                if pos == st.cap:
                    pos = 0
                st.head[s] = pos
                cnt[s] -= 1
                departures += 1
                if jid >= warmup:
                    soj_sum += t - at
                    soj_cnt += 1
                    if record:
                        rec_dep[jid - warmup] = t
                if cnt[s] > 0:
                    _heap_push(&heap_t[0], &heap_s[0], &hsize, t + (-log1p(-_u(rsv))) / mu, <int>s)
                else:
                    busy -= 1
            else:
                if check and t_next < t:
                    raise RuntimeError("event time decreased")
                t = t_next
                if not measuring and arrivals == warmup:
                    measuring = True
                    t_start = t
                    for s in range(n):
                        last[s] = t
                    for p in range(npairs):
                        lastp[p] = t
                u = <Py_ssize_t>(_u(ra) * n)
                if u >= n:
                    u = n - 1
                if sp.kind == KIND_NONE:
                    dest = u
                    hop = 0
                else:
                    v = _draw(&sp, u, _u(rsm), &hpeer)
                    lu = cnt[u]
                    lvv = cnt[v]
                    if lu < lvv:
                        dest = u
                    elif lvv < lu:
                        dest = v
                    elif _u(rt) < 0.5:
                        dest = u
                    else:
                        dest = v
                    if check and cnt[dest] > min(lu, lvv):
                        raise RuntimeError("destination not least loaded")
                    hop = 0 if dest == u else hpeer
                if measuring:
                    _touch(st, cnt, last, lastp, pptr, pidx, pi, pj, dest, t)
                if cnt[dest] == st.cap:
                    st.grow(cnt)
                pos = st.head[dest] + cnt[dest]
                if pos >= st.cap:
                    pos -= st.cap
                st.bt[dest, pos] = t
                st.bid[dest, pos] = arrivals
                cnt[dest] += 1
                if cnt[dest] > max_q:
                    max_q = cnt[dest]
                if cnt[dest] == 1:
                    busy += 1
                    _heap_push(&heap_t[0], &heap_s[0], &hsize, t + (-log1p(-_u(rsv))) / mu, <int>dest)
                if arrivals >= warmup:
                    hop_sum += hop
                    if record:
                        idx = arrivals - warmup
                        rec_at[idx] = t
                        rec_org[idx] = <int>u
                        rec_dst[idx] = <int>dest
                        rec_hop[idx] = hop
                arrivals += 1
                if arrivals == horizon:
                    break
                t_next = t + (-log1p(-_u(ra))) / rate
            if check:
                total_in = 0
                q = 0
                for s in range(n):
                    total_in += cnt[s]
                    if cnt[s] > 0:
                        q += 1
                if hsize != busy or busy != q:
                    raise RuntimeError("busy servers and scheduled departures disagree")
                if arrivals - departures != total_in:
                    raise RuntimeError("job conservation violated")
    for s in range(n):
        _touch(st, cnt, last, lastp, pptr, pidx, pi, pj, s, t)

    width = max_q + 1
    out = {
        "occ": np.ascontiguousarray(st.occ[:, :width]),
        "joint": np.ascontiguousarray(st.joint[:npairs, :width, :width]),
        "t_start": t_start,
        "t_end": t,
        "arrivals": arrivals,
        "departures": departures,
        "departed_measured": soj_cnt,
        "sojourn_sum": soj_sum,
        "hop_sum": hop_sum,
        "counts": cnt_arr,
    }
    if record:
        out["records"] = (rec_at_a, rec_org_a, rec_dst_a, rec_hop_a, rec_dep_a)
    return out


cdef inline void _touch(_DynState st, long long[::1] cnt, double[::1] last, double[::1] lastp,
                        const long long[::1] pptr, const long long[::1] pidx,
                        const long long[::1] pi, const long long[::1] pj,
                        Py_ssize_t s, double t) noexcept:
    cdef Py_ssize_t e, p
    st.ov[s, cnt[s]] += t - last[s]
    last[s] = t
    for e in range(pptr[s], pptr[s + 1]):
        p = pidx[e]
        st.jv[p, cnt[pi[p]], cnt[pj[p]]] += t - lastp[p]
        lastp[p] = t

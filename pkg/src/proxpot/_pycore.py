"""Pure-Python reference kernels.

Mirrors ``_core.pyx`` operation for operation: both consume the same
``next_double`` stream of each numpy bit generator and perform the same
floating-point arithmetic in the same order, so results agree bit for bit.
"""
from __future__ import annotations

import heapq
import math
from collections import deque

import numpy as np

KIND_POT = 0
KIND_LAYERED = 1
KIND_NONE = 2

DIST_MATRIX = 0
DIST_LINE = 1
DIST_RING = 2
DIST_UNKNOWN = 3

_INV_2_53 = 1.0 / 9007199254740992.0


def _uniform_source(bit_generator):
    raw = bit_generator.random_raw

    def draw() -> float:
        return (raw() >> 11) * _INV_2_53

    return draw


def khop_layers(indptr, indices, k):
    n = len(indptr) - 1
    order: list[int] = []
    optr = [0]
    lsize: list[int] = []
    lptr = [0]
    dist = [-1] * n
    for u in range(n):
        dist[u] = 0
        touched = [u]
        frontier = [u]
        depth = 0
        while frontier and depth < k:
            depth += 1
            nxt = []
            for w in frontier:
                for e in range(indptr[w], indptr[w + 1]):
                    x = int(indices[e])
                    if dist[x] < 0:
                        dist[x] = depth
                        nxt.append(x)
            if not nxt:
                break
            touched.extend(nxt)
            order.extend(nxt)
            lsize.append(len(nxt))
            frontier = nxt
        for x in touched:
            dist[x] = -1
        optr.append(len(order))
        lptr.append(len(lsize))
    return (
        np.asarray(order, dtype=np.int32),
        np.asarray(optr, dtype=np.int64),
        np.asarray(lsize, dtype=np.int32),
        np.asarray(lptr, dtype=np.int64),
    )


def bfs_rows(indptr, indices, sources):
    n = len(indptr) - 1
    out = np.full((len(sources), n), -1, dtype=np.int32)
    for r, s in enumerate(sources):
        row = out[r]
        row[s] = 0
        q = deque([int(s)])
        while q:
            w = q.popleft()
            d = row[w] + 1
            for e in range(indptr[w], indptr[w + 1]):
                x = indices[e]
                if row[x] < 0:
                    row[x] = d
                    q.append(int(x))
    return out


class _Sampler:
    __slots__ = ("kind", "n", "order", "optr", "lcum", "lsize", "lstart", "lptr",
                 "dist_mode", "rank", "distmat")

    def __init__(self, s):
        self.kind = s["kind"]
        self.n = s["n"]
        self.order = s["order"].tolist()
        self.optr = s["optr"].tolist()
        self.lcum = s["lcum"].tolist()
        self.lsize = s["lsize"].tolist()
        self.lstart = s["lstart"].tolist()
        self.lptr = s["lptr"].tolist()
        self.dist_mode = s["dist_mode"]
        self.rank = s["rank"].tolist()
        self.distmat = s["distmat"]

    def pot_hop(self, u, v):
        mode = self.dist_mode
        if mode == DIST_MATRIX:
            return int(self.distmat[u, v])
        if mode == DIST_UNKNOWN:
            return -1
        d = abs(self.rank[u] - self.rank[v])
        if mode == DIST_RING and self.n - d < d:
            d = self.n - d
        return d

    def draw(self, u, x):
        """Return (peer, hop) for uniform variate ``x``."""
        if self.kind == KIND_POT:
            n = self.n
            v = int(x * (n - 1))
            if v > n - 2:
                v = n - 2
            if v >= u:
                v += 1
            return v, self.pot_hop(u, v)
        lo = self.lptr[u]
        a = lo
        b = self.lptr[u + 1] - 1
        lcum = self.lcum
        while a < b:
            mid = (a + b) // 2
            if lcum[mid] > x:
                b = mid
            else:
                a = mid + 1
        prev = lcum[a - 1] if a > lo else 0.0
        size = self.lsize[a]
        j = int((x - prev) / (lcum[a] - prev) * size)
        if j >= size:
            j = size - 1
        elif j < 0:
            j = 0
        return self.order[self.optr[u] + self.lstart[a] + j], a - lo + 1


def static_kernel(sampler, origins, runs, m, sample_bg, tie_bg, loads_out,
                  peers=None, dests=None, hops=None, levels=None):
    sp = _Sampler(sampler)
    next_sample = _uniform_source(sample_bg)
    next_tie = _uniform_source(tie_bg)
    record = peers is not None
    origins = origins.tolist()
    for r in range(runs):
        loads = [0] * sp.n
        base = r * m
        for j in range(m):
            u = origins[base + j]
            if sp.kind == KIND_NONE:
                v, hv = u, 0
                dest, hop = u, 0
            else:
                v, hv = sp.draw(u, next_sample())
                lu = loads[u]
                lv = loads[v]
                if lu < lv:
                    dest = u
                elif lv < lu:
                    dest = v
                elif next_tie() < 0.5:
                    dest = u
                else:
                    dest = v
                hop = 0 if dest == u else hv
            if record:
                peers[base + j] = v
                dests[base + j] = dest
                hops[base + j] = hop
                levels[base + j] = loads[dest]
            loads[dest] += 1
        loads_out[r, :] = loads


def tv_evolution(levels_a, levels_b, n):
    m = len(levels_a)
    size = m + 2
    diff = [0] * size
    total = 0
    out = np.empty(m, dtype=np.float64)
    for t in range(m):
        for lev, sign in ((int(levels_a[t]), 1), (int(levels_b[t]), -1)):
            old = diff[lev]
            diff[lev] = old - sign
            total += abs(old - sign) - abs(old)
            old = diff[lev + 1]
            diff[lev + 1] = old + sign
            total += abs(old + sign) - abs(old)
        out[t] = total / (2.0 * n)
    return out


def dynamic_kernel(sampler, lam, mu, horizon, warmup, arr_bg, samp_bg, tie_bg, svc_bg,
                   pair_i, pair_j, record, check):
    sp = _Sampler(sampler)
    n = sp.n
    next_arr = _uniform_source(arr_bg)
    next_samp = _uniform_source(samp_bg)
    next_tie = _uniform_source(tie_bg)
    next_svc = _uniform_source(svc_bg)
    rate = n * lam
    pair_i = [int(x) for x in pair_i]
    pair_j = [int(x) for x in pair_j]
    npairs = len(pair_i)
    pairs_of: list[list[int]] = [[] for _ in range(n)]
    for p in range(npairs):
        pairs_of[pair_i[p]].append(p)
        if pair_j[p] != pair_i[p]:
            pairs_of[pair_j[p]].append(p)

    cnt = [0] * n
    fifo = [deque() for _ in range(n)]
    heap: list[tuple[float, int]] = []
    occ = [[0.0] for _ in range(n)]
    joint = [[[0.0]] for _ in range(npairs)]
    last = [0.0] * n
    lastp = [0.0] * npairs
    measuring = warmup == 0
    t_start = 0.0
    nrec = horizon - warmup
    if record:
        rec_at = np.empty(nrec, dtype=np.float64)
        rec_org = np.empty(nrec, dtype=np.int32)
        rec_dst = np.empty(nrec, dtype=np.int32)
        rec_hop = np.empty(nrec, dtype=np.int32)
        rec_dep = np.full(nrec, np.nan, dtype=np.float64)
    arrivals = 0
    departures = 0
    busy = 0
    soj_sum = 0.0
    soj_cnt = 0
    hop_sum = 0
    max_q = 0

    def touch(s, t):
        q = cnt[s]
        row = occ[s]
        while len(row) <= q:
            row.append(0.0)
        row[q] += t - last[s]
        last[s] = t
        for p in pairs_of[s]:
            qi = cnt[pair_i[p]]
            qj = cnt[pair_j[p]]
            jm = joint[p]
            while len(jm) <= qi:
                jm.append([0.0])
            jr = jm[qi]
            while len(jr) <= qj:
                jr.append(0.0)
            jr[qj] += t - lastp[p]
            lastp[p] = t

    t = 0.0
    t_next = t + (-math.log1p(-next_arr())) / rate
    while True:
        if heap and heap[0][0] < t_next:
            tt, s = heapq.heappop(heap)
            if check and tt < t:
                raise RuntimeError("event time decreased")
            t = tt
            if measuring:
                touch(s, t)
            at, jid = fifo[s].popleft()
            cnt[s] -= 1
            departures += 1
            if jid >= warmup:
                soj_sum += t - at
                soj_cnt += 1
                if record:
                    rec_dep[jid - warmup] = t
            if cnt[s] > 0:
                heapq.heappush(heap, (t + (-math.log1p(-next_svc())) / mu, s))
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
            u = int(next_arr() * n)
            if u >= n:
                u = n - 1
            if sp.kind == KIND_NONE:
                dest, hop = u, 0
            else:
                v, hv = sp.draw(u, next_samp())
                lu = cnt[u]
                lv = cnt[v]
                if lu < lv:
                    dest = u
                elif lv < lu:
                    dest = v
                elif next_tie() < 0.5:
                    dest = u
                else:
                    dest = v
                if check and cnt[dest] > min(lu, lv):
                    raise RuntimeError("destination not least loaded")
                hop = 0 if dest == u else hv
            if measuring:
                touch(dest, t)
            fifo[dest].append((t, arrivals))
            cnt[dest] += 1
            if cnt[dest] > max_q:
                max_q = cnt[dest]
            if cnt[dest] == 1:
                busy += 1
                heapq.heappush(heap, (t + (-math.log1p(-next_svc())) / mu, dest))
            if arrivals >= warmup:
                hop_sum += hop
                if record:
                    idx = arrivals - warmup
                    rec_at[idx] = t
                    rec_org[idx] = u
                    rec_dst[idx] = dest
                    rec_hop[idx] = hop
            arrivals += 1
            if arrivals == horizon:
                break
            t_next = t + (-math.log1p(-next_arr())) / rate
        if check:
            if len(heap) != busy or busy != sum(1 for c in cnt if c > 0):
                raise RuntimeError("busy servers and scheduled departures disagree")
            if arrivals - departures != sum(cnt):
                raise RuntimeError("job conservation violated")
    t_end = t
    for s in range(n):
        touch(s, t_end)

    width = max_q + 1
    occ_arr = np.zeros((n, width), dtype=np.float64)
    for s in range(n):
        occ_arr[s, : len(occ[s])] = occ[s]
    joint_arr = np.zeros((npairs, width, width), dtype=np.float64)
    for p in range(npairs):
        for qi, jr in enumerate(joint[p]):
            joint_arr[p, qi, : len(jr)] = jr
    out = {
        "occ": occ_arr,
        "joint": joint_arr,
        "t_start": t_start,
        "t_end": t_end,
        "arrivals": arrivals,
        "departures": departures,
        "departed_measured": soj_cnt,
        "sojourn_sum": soj_sum,
        "hop_sum": hop_sum,
        "counts": np.asarray(cnt, dtype=np.int64),
    }
    if record:
        out["records"] = (rec_at, rec_org, rec_dst, rec_hop, rec_dep)
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DP kernels for exact join ordering.

Twin of `_kernels_py`; same semantics and float operation order so that the
two implementations agree bit for bit. See the pure module for contracts.
"""

import time

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True

cdef int _CHECK_EVERY = 4096


cdef int _lowbit_index(long long mask) nogil:
    cdef int i = 0
    while not (mask & 1):
        mask >>= 1
        i += 1
    return i


def subset_dp(cards, pu, pv, ps, allow_cross, double deadline_ts=0.0):
    """Optimal bushy plan over every relation subset (O(3^R) split scan).

    Same contract as the pure twin: returns (feasible, root-inclusive cost,
    splits array); ascending submask scan with strict improvement.
    """
    cdef int n = len(cards)
    cdef long long size = 1LL << n
    cdef long long full = size - 1
    cdef int npred = len(pu)
    cdef bint cross = bool(allow_cross)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] cards_a = np.asarray(cards, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pu_a = np.asarray(pu, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pv_a = np.asarray(pv, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ps_a = np.asarray(ps, dtype=np.float64)

    # adjacency in predicate-declaration order (CSR layout per relation)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] deg = np.zeros(n, dtype=np.int32)
    cdef int k, u, v
    for k in range(npred):
        deg[pu_a[k]] += 1
        deg[pv_a[k]] += 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] start = np.zeros(n + 1, dtype=np.int32)
    for k in range(n):
        start[k + 1] = start[k] + deg[k]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] adj_other = np.zeros(max(start[n], 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] adj_sel = np.zeros(max(start[n], 1), dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fill = np.array(start[:n], dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] adjmask = np.zeros(n, dtype=np.int64)
    for k in range(npred):
        u = pu_a[k]; v = pv_a[k]
        adj_other[fill[u]] = v; adj_sel[fill[u]] = ps_a[k]; fill[u] += 1
        adj_other[fill[v]] = u; adj_sel[fill[v]] = ps_a[k]; fill[v] += 1
        adjmask[u] |= 1LL << v
        adjmask[v] |= 1LL << u

    cdef cnp.ndarray[cnp.float64_t, ndim=1] ic = np.zeros(size, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nbr = np.zeros(size, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dp = np.full(size, np.inf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] splits = np.zeros(size, dtype=np.int64)

    cdef long long mask, rest, s, comp, best_s, high
    cdef int low, a
    cdef double val, best, c1, c2, cand
    cdef double INF = np.inf
    cdef long long steps = 0

    for low in range(n):
        ic[1LL << low] = cards_a[low]
        dp[1LL << low] = 0.0

    for mask in range(1, size):
        low = _lowbit_index(mask)
        rest = mask & (mask - 1)
        nbr[mask] = nbr[rest] | adjmask[low]
        if rest == 0:
            continue
        val = ic[rest] * cards_a[low]
        for a in range(start[low], start[low + 1]):
            if (rest >> adj_other[a]) & 1:
                val *= adj_sel[a]
        ic[mask] = val

    for mask in range(1, size):
        if mask & (mask - 1) == 0:
            continue
        if deadline_ts != 0.0:
            steps += 1
            if steps % _CHECK_EVERY == 0 and time.monotonic() > deadline_ts:
                raise TimeoutError("subset_dp deadline exceeded")
        high = 1LL << (63 - _leading_zeros(mask))
        rest = mask ^ high
        best = INF
        best_s = 0
        s = (-rest) & rest
        while s:
            comp = mask ^ s
            c1 = dp[s]
            if c1 < INF:
                c2 = dp[comp]
                if c2 < INF and (cross or (nbr[s] & comp)):
                    cand = c1 + c2
                    if cand < best:
                        best = cand
                        best_s = s
            if s == rest:
                break
            s = (s - rest) & rest
        if best < INF:
            dp[mask] = best + ic[mask]
            splits[mask] = best_s

    cdef bint feasible = dp[full] < INF
    return feasible, (dp[full] if feasible else 0.0), splits


cdef int _leading_zeros(long long x) nogil:
    cdef int c = 0
    cdef unsigned long long ux = <unsigned long long> x
    cdef unsigned long long top = 1ULL << 63
    while not (ux & top):
        ux <<= 1
        c += 1
    return c


cdef double _ic_of_mask(long long mask, double[::1] cards,
                        int[::1] pu, int[::1] pv, double[::1] ps) nogil:
    cdef double v = 1.0
    cdef long long m = mask
    cdef int r, t
    while m:
        r = _lowbit_index(m)
        v *= cards[r]
        m &= m - 1
    for t in range(pu.shape[0]):
        if ((mask >> pu[t]) & 1) and ((mask >> pv[t]) & 1):
            v *= ps[t]
    return v


def dpsize(cards, pu, pv, ps, double deadline_ts=0.0, long long max_entries=4_000_000):
    """Size-driven DP over connected subgraphs, cross products excluded.

    Same contract as the pure twin: (feasible, root-inclusive cost, splits
    dict mask->submask).
    """
    cdef int n = len(cards)
    cdef long long full = (1LL << n) - 1
    cdef int npred = len(pu)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] cards_a = np.asarray(cards, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pu_a = np.asarray(pu, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pv_a = np.asarray(pv, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ps_a = np.asarray(ps, dtype=np.float64)
    cdef double[::1] cards_v = cards_a
    cdef int[::1] pu_v = pu_a
    cdef int[::1] pv_v = pv_a
    cdef double[::1] ps_v = ps_a

    cdef cnp.ndarray[cnp.int64_t, ndim=1] adjmask = np.zeros(n, dtype=np.int64)
    cdef int k, r
    for k in range(npred):
        adjmask[pu_a[k]] |= 1LL << pv_a[k]
        adjmask[pv_a[k]] |= 1LL << pu_a[k]

    best = {}
    icm = {}
    splits = {}
    # per-size typed mirrors for the hot pair scan
    size_masks = [None] * (n + 1)
    size_costs = [None] * (n + 1)
    size_nbrs = [None] * (n + 1)

    cdef long long m
    for r in range(n):
        m = 1LL << r
        best[m] = 0.0
        icm[m] = cards_a[r]
    size_masks[1] = np.array([1 << r for r in range(n)], dtype=np.int64)
    size_costs[1] = np.array([0.0] * n, dtype=np.float64)
    size_nbrs[1] = np.array([adjmask[r] for r in range(n)], dtype=np.int64)

    cdef long long steps = 0
    cdef int s, kk, ia, ib, ib0
    cdef long long ma, mb, u, na, acc, mm
    cdef double ca, icu, cand
    cdef long long[::1] la_m, lb_m
    cdef double[::1] la_c, lb_c
    cdef long long[::1] la_n
    cdef bint same
    cdef object prev

    for s in range(2, n + 1):
        new_costs = {}
        for kk in range(1, s // 2 + 1):
            if size_masks[kk] is None or size_masks[s - kk] is None:
                continue
            la_m = size_masks[kk]; la_c = size_costs[kk]; la_n = size_nbrs[kk]
            lb_m = size_masks[s - kk]; lb_c = size_costs[s - kk]
            same = kk == s - kk
            for ia in range(la_m.shape[0]):
                ma = la_m[ia]
                na = la_n[ia]
                ca = la_c[ia]
                ib0 = ia + 1 if same else 0
                for ib in range(ib0, lb_m.shape[0]):
                    mb = lb_m[ib]
                    if (ma & mb) or not (na & mb):
                        continue
                    steps += 1
                    if deadline_ts != 0.0 and steps % _CHECK_EVERY == 0 and time.monotonic() > deadline_ts:
                        raise TimeoutError("dpsize deadline exceeded")
                    u = ma | mb
                    prev = icm.get(u)
                    if prev is None:
                        icu = _ic_of_mask(u, cards_v, pu_v, pv_v, ps_v)
                        icm[u] = icu
                    else:
                        icu = prev
                    cand = ca + lb_c[ib] + icu
                    prev = new_costs.get(u)
                    if prev is None or cand < <double> prev:
                        new_costs[u] = cand
                        splits[u] = ma if ma < mb else mb
        if not new_costs:
            return False, 0.0, splits
        order = sorted(new_costs)
        nm = np.empty(len(order), dtype=np.int64)
        nc = np.empty(len(order), dtype=np.float64)
        nn = np.empty(len(order), dtype=np.int64)
        for ia in range(len(order)):
            u = order[ia]
            best[u] = new_costs[u]
            acc = 0
            mm = u
            while mm:
                r = _lowbit_index(mm)
                acc |= adjmask[r]
                mm &= mm - 1
            nm[ia] = u
            nc[ia] = new_costs[u]
            nn[ia] = acc & ~u
        size_masks[s] = nm
        size_costs[s] = nc
        size_nbrs[s] = nn
        if len(best) > max_entries:
            raise MemoryError(f"dpsize table exceeded {max_entries} entries")

    cdef bint feasible = full in best
    return feasible, best.get(full, 0.0), splits

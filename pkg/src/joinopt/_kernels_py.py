"""Pure-Python DP kernels for exact join ordering.

Twin of the compiled Cython module `_kernels_cy`; the two implementations
keep identical semantics and iteration order so results match bit for bit.
Selected at import time by `_kernels` when the compiled module is missing.

Masks are relation-id bitsets. Both kernels compute root-inclusive costs
(sum of intermediate sizes over every join including the last); callers
subtract the constant full-set term or recompute from the tree.

Kernels raise the builtin TimeoutError when a deadline (time.monotonic
timestamp) passes.
"""

from __future__ import annotations

import time

COMPILED = False

_CHECK_EVERY = 4096


def _ic_table(n, cards, adj):
    """Intermediate cardinality for every subset mask (size 2**n)."""
    size = 1 << n
    ic = [0.0] * size
    for r in range(n):
        ic[1 << r] = cards[r]
    for mask in range(1, size):
        if mask & (mask - 1) == 0:
            continue
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        v = ic[rest] * cards[low]
        for other, sel in adj[low]:
            if (rest >> other) & 1:
                v *= sel
        ic[mask] = v
    return ic


def _adjacency(n, pu, pv, ps):
    adj = [[] for _ in range(n)]
    adjmask = [0] * n
    for k in range(len(pu)):
        u, v, s = pu[k], pv[k], ps[k]
        adj[u].append((v, s))
        adj[v].append((u, s))
        adjmask[u] |= 1 << v
        adjmask[v] |= 1 << u
    return adj, adjmask


def subset_dp(cards, pu, pv, ps, allow_cross, deadline_ts=0.0):
    """Optimal bushy plan over every relation subset (O(3^R) split scan).

    Returns (feasible, root_inclusive_cost, splits) where splits[mask] is the
    chosen child submask for every mask with a finite plan. With
    allow_cross=False only splits where both sides are connected subgraphs
    linked by at least one predicate are considered.

    Ties prefer the split whose smaller side has the lowest subset index
    (splits are scanned in ascending submask order with strict improvement).
    """
    n = len(cards)
    size = 1 << n
    full = size - 1
    adj, adjmask = _adjacency(n, pu, pv, ps)
    ic = _ic_table(n, cards, adj)

    # nbr[mask] = union of adjacency masks over members
    nbr = [0] * size
    for mask in range(1, size):
        low = (mask & -mask).bit_length() - 1
        nbr[mask] = nbr[mask & (mask - 1)] | adjmask[low]

    inf = float("inf")
    dp = [inf] * size
    splits = [0] * size
    for r in range(n):
        dp[1 << r] = 0.0

    steps = 0
    for mask in range(1, size):
        if mask & (mask - 1) == 0:
            continue
        if deadline_ts:
            steps += 1
            if steps % _CHECK_EVERY == 0 and time.monotonic() > deadline_ts:
                raise TimeoutError("subset_dp deadline exceeded")
        high = 1 << (mask.bit_length() - 1)
        rest = mask ^ high
        best = inf
        best_s = 0
        # ascending submask enumeration over sides not containing the top bit
        s = (-rest) & rest
        while s:
            comp = mask ^ s
            c1 = dp[s]
            if c1 < inf:
                c2 = dp[comp]
                if c2 < inf and (allow_cross or (nbr[s] & comp)):
                    cand = c1 + c2
                    if cand < best:
                        best = cand
                        best_s = s
            if s == rest:
                break
            s = (s - rest) & rest
        if best < inf:
            dp[mask] = best + ic[mask]
            splits[mask] = best_s
    feasible = dp[full] < inf
    return feasible, dp[full] if feasible else 0.0, splits


def _ic_of_mask(mask, cards, pu, pv, ps):
    """Canonical intermediate cardinality of one subset (members ascending,
    then predicates in declaration order)."""
    v = 1.0
    m = mask
    while m:
        r = (m & -m).bit_length() - 1
        v *= cards[r]
        m &= m - 1
    for t in range(len(pu)):
        if (mask >> pu[t]) & 1 and (mask >> pv[t]) & 1:
            v *= ps[t]
    return v


def dpsize(cards, pu, pv, ps, deadline_ts=0.0, max_entries=4_000_000):
    """Size-driven DP over connected subgraphs, cross products excluded.

    Plans of size s are formed from plan pairs of sizes k and s-k that are
    disjoint and linked by a predicate. Returns (feasible, root_inclusive
    cost, splits dict mask->submask).
    """
    n = len(cards)
    full = (1 << n) - 1
    _, adjmask = _adjacency(n, pu, pv, ps)

    best = {}
    icm = {}
    nbrm = {}
    splits = {}
    sizes = [[] for _ in range(n + 1)]
    for r in range(n):
        m = 1 << r
        best[m] = 0.0
        icm[m] = cards[r]
        nbrm[m] = adjmask[r]
        sizes[1].append(m)

    steps = 0
    for s in range(2, n + 1):
        new_costs = {}
        for k in range(1, s // 2 + 1):
            la, lb = sizes[k], sizes[s - k]
            same = k == s - k
            for ia in range(len(la)):
                ma = la[ia]
                na = nbrm[ma]
                ca = best[ma]
                for ib in range(ia + 1 if same else 0, len(lb)):
                    mb = lb[ib]
                    if ma & mb or not (na & mb):
                        continue
                    steps += 1
                    if deadline_ts and steps % _CHECK_EVERY == 0 and time.monotonic() > deadline_ts:
                        raise TimeoutError("dpsize deadline exceeded")
                    u = ma | mb
                    icu = icm.get(u)
                    if icu is None:
                        icu = _ic_of_mask(u, cards, pu, pv, ps)
                        icm[u] = icu
                    cand = ca + best[mb] + icu
                    prev = new_costs.get(u)
                    if prev is None or cand < prev:
                        new_costs[u] = cand
                        splits[u] = min(ma, mb)
        if not new_costs:
            return False, 0.0, splits
        for u in sorted(new_costs):
            best[u] = new_costs[u]
            acc = 0
            m = u
            while m:
                r = (m & -m).bit_length() - 1
                acc |= adjmask[r]
                m &= m - 1
            nbrm[u] = acc & ~u
            sizes[s].append(u)
        if len(best) > max_entries:
            raise MemoryError(f"dpsize table exceeded {max_entries} entries")

    feasible = full in best
    return feasible, best.get(full, 0.0), splits

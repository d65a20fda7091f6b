"""Classical join-ordering algorithms.

* ikkbz: optimal left-deep, cross-product-free plans for acyclic graphs via
  rank-based chain merging (adjacent sequence interchange), best over all
  candidate first relations.
* linearized_dp: interval DP producing the optimal bushy tree whose
  left-to-right leaf sequence equals a given relation order.
* adaptive: linearized_dp applied to the ikkbz order.
* goo / goo_dp: greedy bottom-up merging by minimal join output (optionally
  DP-refined).
* minsel: greedy left-deep construction by minimal selectivity.
* quickpick: best of N random edge-driven tree constructions.
* genetic: evolutionary search over edge-insertion sequences.

Randomized algorithms take explicit seeds and are deterministic for a fixed
seed and budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    InvalidArgumentError,
    Join,
    JoinTree,
    Leaf,
    PlanResult,
    QueryGraph,
    left_deep_tree,
    plan_cost,
    tree_leaves,
)


@dataclass(frozen=True)
class LinearOrder:
    """A permutation of the graph's relation ids."""

    order: tuple[int, ...]

    def validate(self, graph: QueryGraph) -> None:
        if sorted(self.order) != list(range(graph.n_relations)):
            raise InvalidArgumentError(
                f"order {self.order} is not a permutation of 0..{graph.n_relations - 1}"
            )


# ---------------------------------------------------------------------------
# IKKBZ
# ---------------------------------------------------------------------------


class _Module:
    """A glued subsequence in the rank-merge: relation ids in order, with the
    sequence's multiplicative size factor T and relative cost C."""

    __slots__ = ("rels", "T", "C")

    def __init__(self, rels, T, C):
        self.rels = rels
        self.T = T
        self.C = C

    @property
    def rank(self) -> float:
        return (self.T - 1.0) / self.C

    def key(self):
        return (self.rank, self.rels[0])


def _combine(a: _Module, b: _Module) -> _Module:
    return _Module(a.rels + b.rels, a.T * b.T, a.C + a.T * b.C)


def _ikkbz_order_for_root(graph: QueryGraph, root: int) -> list[int]:
    """Optimal left-deep order starting at `root` on an acyclic graph."""
    n = graph.n_relations
    children: list[list[int]] = [[] for _ in range(n)]
    parent = [-1] * n
    seen = [False] * n
    seen[root] = True
    stack = [root]
    while stack:
        v = stack.pop()
        for w, _ in graph.neighbors(v):
            if not seen[w]:
                seen[w] = True
                parent[w] = v
                children[v].append(w)
                stack.append(w)

    # bottom-up over the precedence tree: merge child chains by ascending
    # rank, then glue lower-ranked heads onto the node (precedence wins)
    post: list[int] = []
    stack = [(root, False)]
    while stack:
        v, expanded = stack.pop()
        if expanded:
            post.append(v)
            continue
        stack.append((v, True))
        for c in children[v]:
            stack.append((c, False))

    chains: dict[int, list[_Module]] = {}
    for v in post:
        merged: list[_Module] = []
        for c in children[v]:
            merged.extend(chains.pop(c))
        merged.sort(key=_Module.key)
        if v == root:
            chains[v] = [_Module([v], graph.cardinality(v), 1.0)] + merged
            continue
        t = graph.selectivity(v, parent[v]) * graph.cardinality(v)
        head = _Module([v], t, t)
        while merged and merged[0].rank < head.rank:
            head = _combine(head, merged.pop(0))
        chains[v] = [head] + merged

    return [r for m in chains[root] for r in m.rels]


def _selectivity_spanning_tree(graph: QueryGraph) -> QueryGraph:
    """Minimum spanning tree under edge weight log(selectivity) (Kruskal)."""
    parent = list(range(graph.n_relations))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    kept = []
    for p in sorted(graph.predicates, key=lambda p: (p.selectivity, p.rel_a, p.rel_b)):
        ra, rb = find(p.rel_a), find(p.rel_b)
        if ra != rb:
            parent[ra] = rb
            kept.append(p)
    return QueryGraph(graph.relations, kept)


def ikkbz(graph: QueryGraph) -> tuple[Optional[LinearOrder], PlanResult]:
    """Minimum-cost left-deep, cross-product-free plan for acyclic graphs.

    Runs the rank-based chain merge once per candidate first relation and
    keeps the cheapest result. Cyclic graphs fall back to a maximum
    selectivity spanning tree (flagged in result meta, plan still evaluated
    on the full graph); disconnected graphs are infeasible.
    """
    t0 = time.monotonic()
    n = graph.n_relations
    if n == 1:
        return LinearOrder((0,)), PlanResult("ikkbz", Leaf(0), 0.0, time.monotonic() - t0)
    if not graph.is_connected():
        return None, PlanResult("ikkbz", None, None, time.monotonic() - t0, "infeasible")

    meta = {}
    search_graph = graph
    if graph.n_predicates > n - 1:
        search_graph = _selectivity_spanning_tree(graph)
        meta["cyclic_fallback"] = True

    best_order = None
    best_cost = None
    for root in range(n):
        order = _ikkbz_order_for_root(search_graph, root)
        cost = plan_cost(graph, left_deep_tree(order))
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_order = order
    tree = left_deep_tree(best_order)
    return (
        LinearOrder(tuple(best_order)),
        PlanResult("ikkbz", tree, best_cost, time.monotonic() - t0, "ok", meta),
    )


# ---------------------------------------------------------------------------
# Search-space linearization (interval DP over a fixed order)
# ---------------------------------------------------------------------------


def linearized_dp(graph: QueryGraph, order: LinearOrder) -> PlanResult:
    """Optimal bushy tree whose left-to-right leaf sequence equals `order`.

    Interval DP: best[i..j] = min over k of best[i..k] + best[k+1..j] plus
    the interval's intermediate size; the full interval (root join) is not
    charged. Any split is allowed, so cross products inside the order are
    legal and the left-deep tree over the same order is always dominated.
    """
    t0 = time.monotonic()
    order.validate(graph)
    seq = list(order.order)
    n = len(seq)
    if n == 1:
        return PlanResult("linearized-dp", Leaf(seq[0]), 0.0, time.monotonic() - t0)

    pos = {rel: i for i, rel in enumerate(seq)}
    ic = np.zeros((n, n))
    for i in range(n):
        ic[i, i] = graph.cardinality(seq[i])
        for j in range(i + 1, n):
            v = ic[i, j - 1] * graph.cardinality(seq[j])
            for other, sel in graph.neighbors(seq[j]):
                if i <= pos[other] < j:
                    v *= sel
            ic[i, j] = v

    dp = np.zeros((n, n))
    split = np.zeros((n, n), dtype=np.int64)
    for length in range(2, n + 1):
        for i in range(0, n - length + 1):
            j = i + length - 1
            cand = dp[i, i:j] + dp[i + 1 : j + 1, j]
            k = int(np.argmin(cand))
            charge = 0.0 if length == n else ic[i, j]
            dp[i, j] = cand[k] + charge
            split[i, j] = i + k

    def build(i: int, j: int) -> JoinTree:
        if i == j:
            return Leaf(seq[i])
        k = int(split[i, j])
        return Join(build(i, k), build(k + 1, j))

    tree = build(0, n - 1)
    return PlanResult(
        "linearized-dp", tree, plan_cost(graph, tree), time.monotonic() - t0
    )


def adaptive(graph: QueryGraph) -> PlanResult:
    """IKKBZ order refined into a bushy tree by interval DP."""
    t0 = time.monotonic()
    if graph.n_relations == 1:
        return PlanResult("adaptive", Leaf(0), 0.0, time.monotonic() - t0)
    order, base = ikkbz(graph)
    if order is None:
        return PlanResult(
            "adaptive", None, None, time.monotonic() - t0, base.status, dict(base.meta)
        )
    refined = linearized_dp(graph, order)
    return PlanResult(
        "adaptive", refined.tree, refined.cost, time.monotonic() - t0, "ok", dict(base.meta)
    )


# ---------------------------------------------------------------------------
# Greedy operator ordering
# ---------------------------------------------------------------------------


def goo(graph: QueryGraph) -> PlanResult:
    """Greedy bottom-up merging: repeatedly join the pair of forests with the
    minimal output size.

    Only predicate-connected pairs are considered while any exist; cross
    products happen only when forced. Ties go to the pair with the lowest
    (min relation id, min relation id) key.
    """
    t0 = time.monotonic()
    n = graph.n_relations
    if n < 2:
        return PlanResult("goo", Leaf(0), 0.0, time.monotonic() - t0)

    comp_ids = list(range(n))
    trees: dict[int, JoinTree] = {i: Leaf(i) for i in range(n)}
    cards: dict[int, float] = {i: graph.cardinality(i) for i in range(n)}
    cross: dict[tuple[int, int], float] = {}
    edges: dict[tuple[int, int], int] = {}
    for p in graph.predicates:
        key = (p.rel_a, p.rel_b)
        cross[key] = cross.get(key, 1.0) * p.selectivity
        edges[key] = edges.get(key, 0) + 1

    while len(comp_ids) > 1:
        best = None
        for ii in range(len(comp_ids)):
            for jj in range(ii + 1, len(comp_ids)):
                a, b = comp_ids[ii], comp_ids[jj]
                key = (a, b)
                connected = edges.get(key, 0) > 0
                out = cards[a] * cards[b] * cross.get(key, 1.0)
                cand = (not connected, out, a, b)
                if best is None or cand < best:
                    best = cand
        _, _, a, b = best
        trees[a] = Join(trees[a], trees[b])
        cards[a] = cards[a] * cards[b] * cross.get((a, b), 1.0)
        comp_ids.remove(b)
        for c in comp_ids:
            if c == a:
                continue
            k_ac = (min(a, c), max(a, c))
            k_bc = (min(b, c), max(b, c))
            if k_bc in cross:
                cross[k_ac] = cross.get(k_ac, 1.0) * cross.pop(k_bc)
            if k_bc in edges:
                edges[k_ac] = edges.get(k_ac, 0) + edges.pop(k_bc)
        cross.pop((a, b), None)
        edges.pop((a, b), None)

    tree = trees[comp_ids[0]]
    return PlanResult("goo", tree, plan_cost(graph, tree), time.monotonic() - t0)


def goo_dp(graph: QueryGraph) -> PlanResult:
    """Interval-DP refinement of the goo tree's leaf order."""
    t0 = time.monotonic()
    base = goo(graph)
    refined = linearized_dp(graph, LinearOrder(tuple(tree_leaves(base.tree))))
    return PlanResult("goo-dp", refined.tree, refined.cost, time.monotonic() - t0)


def minsel(graph: QueryGraph) -> PlanResult:
    """Greedy left-deep construction by minimal selectivity.

    Start with the globally most selective predicate, then repeatedly append
    the relation reached by the most selective predicate leaving the current
    prefix; if no predicate leaves the prefix, append the smallest-cardinality
    remaining relation as a cross product. Ties break on relation ids.
    """
    t0 = time.monotonic()
    n = graph.n_relations
    if n < 2:
        return PlanResult("minsel", Leaf(0), 0.0, time.monotonic() - t0)

    if graph.predicates:
        first = min(graph.predicates, key=lambda p: (p.selectivity, p.rel_a, p.rel_b))
        seq = [first.rel_a, first.rel_b]
    else:
        start = min(range(n), key=lambda r: (graph.cardinality(r), r))
        seq = [start]
    inside = set(seq)
    while len(seq) < n:
        best = None
        for u in seq:
            for v, sel in graph.neighbors(u):
                if v in inside:
                    continue
                cand = (sel, min(u, v), max(u, v), v)
                if best is None or cand < best:
                    best = cand
        if best is not None:
            nxt = best[3]
        else:
            nxt = min(
                (r for r in range(n) if r not in inside),
                key=lambda r: (graph.cardinality(r), r),
            )
        seq.append(nxt)
        inside.add(nxt)
    tree = left_deep_tree(seq)
    return PlanResult("minsel", tree, plan_cost(graph, tree), time.monotonic() - t0)


# ---------------------------------------------------------------------------
# Randomized construction: quickpick and genetic
# ---------------------------------------------------------------------------


class _ForestBuilder:
    """Incremental random-tree construction shared by quickpick and genetic.

    Components carry their output cardinality; pairwise selectivity products
    live in a collapsing matrix so each merge is O(R).
    """

    def __init__(self, graph: QueryGraph, base_sel: np.ndarray):
        self.graph = graph
        n = graph.n_relations
        self.rep = list(range(n))  # union-find
        self.sel = base_sel.copy()
        self.cards = np.array([r.cardinality for r in graph.relations])
        self.trees: dict[int, JoinTree] = {i: Leaf(i) for i in range(n)}
        self.n_comps = n
        self.cost_sum = 0.0
        self.last_ic = 0.0

    def find(self, x: int) -> int:
        rep = self.rep
        while rep[x] != x:
            rep[x] = rep[rep[x]]
            x = rep[x]
        return x

    def merge(self, u: int, v: int) -> bool:
        """Join the components of u and v; returns False when already merged."""
        a, b = self.find(u), self.find(v)
        if a == b:
            return False
        ic = self.cards[a] * self.cards[b] * self.sel[a, b]
        # the newest merge is held back so the final (root) join never enters
        # the cost sum
        self.cost_sum += self.last_ic
        self.last_ic = ic
        self.trees[a] = Join(self.trees[a], self.trees.pop(b))
        self.cards[a] = ic
        self.sel[a, :] *= self.sel[b, :]
        self.sel[:, a] *= self.sel[:, b]
        self.rep[b] = a
        self.n_comps -= 1
        return True

    def result(self) -> tuple[JoinTree, float]:
        assert self.n_comps == 1
        root = self.find(0)
        return self.trees[root], self.cost_sum


def _base_sel_matrix(graph: QueryGraph) -> np.ndarray:
    n = graph.n_relations
    base = np.ones((n, n))
    for p in graph.predicates:
        base[p.rel_a, p.rel_b] = p.selectivity
        base[p.rel_b, p.rel_a] = p.selectivity
    return base


def _edge_pool(graph: QueryGraph) -> list[tuple[int, int]]:
    """Graph edges, plus bridging pairs between components when disconnected."""
    pool = [(p.rel_a, p.rel_b) for p in graph.predicates]
    comps = graph.connected_components()
    if len(comps) > 1:
        reps = [c[0] for c in comps]
        for i in range(len(reps)):
            for j in range(i + 1, len(reps)):
                pool.append((reps[i], reps[j]))
    return pool


def quickpick(
    graph: QueryGraph,
    trials: int = 1000,
    seed: int = 0,
    deadline: Optional[float] = None,
) -> PlanResult:
    """Best of `trials` random join trees.

    Each trial repeatedly draws a random query-graph edge and merges the two
    components containing its endpoints; on disconnected graphs, bridging
    pairs between components join the candidate pool.
    """
    t0 = time.monotonic()
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    n = graph.n_relations
    if n < 2:
        return PlanResult("quickpick", Leaf(0), 0.0, time.monotonic() - t0)
    rng = np.random.default_rng(seed)
    pool = _edge_pool(graph)
    base_sel = _base_sel_matrix(graph)

    best_tree = None
    best_cost = None
    done = 0
    for _ in range(trials):
        if deadline is not None and time.monotonic() > deadline and best_tree is not None:
            break
        builder = _ForestBuilder(graph, base_sel)
        for idx in rng.permutation(len(pool)):
            if builder.n_comps == 1:
                break
            u, v = pool[idx]
            builder.merge(u, v)
        tree, cost = builder.result()
        done += 1
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_tree = tree
    cost = plan_cost(graph, best_tree)
    return PlanResult(
        "quickpick", best_tree, cost, time.monotonic() - t0, "ok", {"trials": done}
    )


def _build_from_sequence(graph, base_sel, pool, sequence) -> tuple[JoinTree, float]:
    builder = _ForestBuilder(graph, base_sel)
    for idx in sequence:
        if builder.n_comps == 1:
            break
        builder.merge(*pool[idx])
    return builder.result()


def genetic(
    graph: QueryGraph,
    generations: int = 50,
    seed: int = 0,
    population_size: int = 100,
    tournament: int = 4,
    mutation_prob: float = 0.1,
    elitism: int = 2,
    deadline: Optional[float] = None,
) -> PlanResult:
    """Evolutionary search over edge-insertion sequences.

    Individuals are permutations of the edge pool (the same construction
    recipes quickpick samples); order crossover, swap mutation, tournament
    selection, and elitism keep every individual a valid plan by
    construction.
    """
    t0 = time.monotonic()
    n = graph.n_relations
    if n < 2:
        return PlanResult("genetic", Leaf(0), 0.0, time.monotonic() - t0)
    rng = np.random.default_rng(seed)
    pool = _edge_pool(graph)
    base_sel = _base_sel_matrix(graph)
    m = len(pool)

    def evaluate(ind) -> float:
        _, cost = _build_from_sequence(graph, base_sel, pool, ind)
        return cost

    population = [rng.permutation(m) for _ in range(population_size)]
    fitness = [evaluate(ind) for ind in population]

    def crossover(pa, pb):
        # order crossover: copy a slice from pa, fill the rest in pb's order
        i, j = sorted(rng.integers(0, m, size=2))
        child = np.full(m, -1, dtype=pa.dtype)
        child[i : j + 1] = pa[i : j + 1]
        used = set(child[i : j + 1].tolist())
        fill = [g for g in pb if g not in used]
        k = 0
        for p in range(m):
            if child[p] == -1:
                child[p] = fill[k]
                k += 1
        return child

    gens_run = 0
    for _ in range(generations):
        if deadline is not None and time.monotonic() > deadline:
            break
        order = sorted(range(population_size), key=lambda i: fitness[i])
        new_pop = [population[i].copy() for i in order[:elitism]]
        new_fit = [fitness[i] for i in order[:elitism]]
        while len(new_pop) < population_size:
            picks = rng.integers(0, population_size, size=tournament)
            pa = population[min(picks, key=lambda i: fitness[i])]
            picks = rng.integers(0, population_size, size=tournament)
            pb = population[min(picks, key=lambda i: fitness[i])]
            child = crossover(pa, pb)
            if rng.random() < mutation_prob and m >= 2:
                i, j = rng.integers(0, m, size=2)
                child[i], child[j] = child[j], child[i]
            new_pop.append(child)
            new_fit.append(evaluate(child))
        population, fitness = new_pop, new_fit
        gens_run += 1

    best_idx = min(range(len(population)), key=lambda i: fitness[i])
    tree, _ = _build_from_sequence(graph, base_sel, pool, population[best_idx])
    cost = plan_cost(graph, tree)
    return PlanResult(
        "genetic", tree, cost, time.monotonic() - t0, "ok", {"generations": gens_run}
    )

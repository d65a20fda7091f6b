"""Exact join-ordering oracles.

Two dynamic programs over relation subsets:

* `brute_force_optimal`: the ground-truth optimum over all bushy trees,
  optionally including cross products. Guarded to R <= 16 (the subset table
  is O(2^R) and the split scan O(3^R)).
* `dpsize`: optimal bushy tree without cross products, enumerated
  size-driven (plans of size s built from plan pairs of sizes k and s-k).

Both report the cost recomputed from the decoded tree with `plan_cost`, so
returned costs are exactly what the evaluator assigns to the returned plan.
"""

from __future__ import annotations

import time
from typing import Optional

from . import _kernels
from .core import (
    InvalidArgumentError,
    Join,
    JoinTree,
    Leaf,
    PlanResult,
    QueryGraph,
    plan_cost,
)

BRUTE_FORCE_MAX_RELATIONS = 16


def _graph_arrays(graph: QueryGraph):
    cards = [r.cardinality for r in graph.relations]
    pu = [p.rel_a for p in graph.predicates]
    pv = [p.rel_b for p in graph.predicates]
    ps = [p.selectivity for p in graph.predicates]
    return cards, pu, pv, ps


def _tree_from_splits(mask: int, splits) -> JoinTree:
    if mask & (mask - 1) == 0:
        return Leaf(mask.bit_length() - 1)
    s = int(splits[mask])
    return Join(_tree_from_splits(s, splits), _tree_from_splits(mask ^ s, splits))


def brute_force_optimal(
    graph: QueryGraph, allow_cross: bool = True, deadline: Optional[float] = None
) -> PlanResult:
    """Minimum-cost bushy join tree by exhaustive subset DP.

    With allow_cross=False only splits whose sides are connected subgraphs
    linked by at least one predicate are considered; on a disconnected graph
    this returns status 'infeasible'.
    """
    name = "brute-force" if allow_cross else "brute-force-nocross"
    n = graph.n_relations
    if n > BRUTE_FORCE_MAX_RELATIONS:
        raise InvalidArgumentError(
            f"brute_force_optimal is guarded to R <= {BRUTE_FORCE_MAX_RELATIONS}, got {n}"
        )
    t0 = time.monotonic()
    if n == 1:
        return PlanResult(name, Leaf(0), 0.0, time.monotonic() - t0, "ok")
    cards, pu, pv, ps = _graph_arrays(graph)
    try:
        feasible, _, splits = _kernels.subset_dp(
            cards, pu, pv, ps, allow_cross, deadline or 0.0
        )
    except TimeoutError:
        return PlanResult(name, None, None, time.monotonic() - t0, "timeout")
    if not feasible:
        return PlanResult(name, None, None, time.monotonic() - t0, "infeasible")
    tree = _tree_from_splits((1 << n) - 1, splits)
    return PlanResult(name, tree, plan_cost(graph, tree), time.monotonic() - t0, "ok")


def dpsize(graph: QueryGraph, deadline: Optional[float] = None) -> PlanResult:
    """Optimal bushy join tree without cross products, size-driven DP.

    Requires a connected graph (returns status 'infeasible' otherwise);
    matches brute_force_optimal(graph, allow_cross=False) in cost.
    """
    n = graph.n_relations
    t0 = time.monotonic()
    if n == 1:
        return PlanResult("dpsize", Leaf(0), 0.0, time.monotonic() - t0, "ok")
    if not graph.is_connected():
        return PlanResult("dpsize", None, None, time.monotonic() - t0, "infeasible")
    cards, pu, pv, ps = _graph_arrays(graph)
    try:
        feasible, _, splits = _kernels.dpsize(cards, pu, pv, ps, deadline or 0.0)
    except TimeoutError:
        return PlanResult("dpsize", None, None, time.monotonic() - t0, "timeout")
    except MemoryError:
        return PlanResult("dpsize", None, None, time.monotonic() - t0, "error",
                          meta={"reason": "table size guard"})
    if not feasible:
        return PlanResult("dpsize", None, None, time.monotonic() - t0, "infeasible")
    tree = _tree_from_splits((1 << n) - 1, splits)
    return PlanResult("dpsize", tree, plan_cost(graph, tree), time.monotonic() - t0, "ok")

"""End-to-end hybrid optimization: MILP for the upper tree, interval-DP
refinement of IKKBZ orders for the rest.

Pipeline per query:

1. Run the adaptive algorithm for a reference plan.
2. Derive cost thresholds from the reference cost (powers of two).
3. For each configured depth, build a two-anchor complete template, encode,
   and solve the MILP (depth configurations run concurrently, one external
   solver process each).
4. Decode every returned assignment into a partial plan, solve each anchor
   group as its own join-ordering subproblem, and splice the subtrees back.
5. Recompute every stitched candidate's exact cost and return the cheapest
   plan among all candidates and the adaptive reference.

The adaptive reference always participates in the final selection, so the
hybrid result never costs more than adaptive alone. When every MILP
configuration times out or fails, the adaptive plan is returned with a meta
flag recording the fallback.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import (
    InvalidArgumentError,
    Join,
    JoinTree,
    Leaf,
    PlanResult,
    Predicate,
    QueryGraph,
    Relation,
    plan_cost,
    tree_leaves,
    validate_tree,
)
from .heuristics import adaptive
from .milp_model import (
    AnchorLeaf,
    DecodeInfeasibleError,
    PartialPlan,
    build_template,
    decode,
    derive_thresholds,
    encode,
)
from .milp_solver import SolverConfig, default_solver_config, solve_external

logger = logging.getLogger(__name__)

DEFAULT_DEPTHS = (4, 5, 6, 7)
ALGORITHM = "hybrid-milp"


@dataclass(frozen=True)
class SubProblem:
    """An anchor group as a standalone query graph, with the id mapping back
    to the parent graph."""

    anchor_slot: int
    graph: QueryGraph
    to_parent: tuple[int, ...]


def derive_part_problems(graph: QueryGraph, partial: PartialPlan) -> list[SubProblem]:
    """Induced subgraph per anchor group (relations renumbered to 0..k-1)."""
    out = []
    for slot in sorted(partial.anchor_groups):
        group = sorted(partial.anchor_groups[slot])
        local = {rel: i for i, rel in enumerate(group)}
        relations = [
            Relation(local[rel], graph.relations[rel].name, graph.relations[rel].cardinality)
            for rel in group
        ]
        predicates = [
            Predicate(local[p.rel_a], local[p.rel_b], p.selectivity)
            for p in graph.predicates
            if p.rel_a in local and p.rel_b in local
        ]
        out.append(SubProblem(slot, QueryGraph(relations, predicates), tuple(group)))
    return out


def stitch(partial: PartialPlan, sub_solutions: Mapping[int, JoinTree]) -> JoinTree:
    """Replace each anchor group with its solved subtree.

    Sub-solutions are trees over the parent graph's relation ids and must
    cover exactly their group's relations.
    """
    for slot, group in partial.anchor_groups.items():
        if slot not in sub_solutions:
            raise InvalidArgumentError(f"missing sub-solution for anchor slot {slot}")
        leaves = set(tree_leaves(sub_solutions[slot]))
        if leaves != set(group):
            raise InvalidArgumentError(
                f"sub-solution for anchor slot {slot} covers {sorted(leaves)}, "
                f"expected {sorted(group)}"
            )

    def rebuild(node) -> JoinTree:
        if isinstance(node, Leaf):
            return node
        if isinstance(node, AnchorLeaf):
            return sub_solutions[node.slot]
        return Join(rebuild(node.left), rebuild(node.right))

    return rebuild(partial.tree)


def _relabel(tree: JoinTree, mapping: tuple[int, ...]) -> JoinTree:
    if isinstance(tree, Leaf):
        return Leaf(mapping[tree.rel])
    return Join(_relabel(tree.left, mapping), _relabel(tree.right, mapping))


def _solve_subproblem(sub: QueryGraph) -> JoinTree:
    """Adaptive on the anchor group; components merged smallest-output-first
    when the group happens to be disconnected (cross products)."""
    comps = sub.connected_components()
    if len(comps) == 1:
        return adaptive(sub).tree
    pieces = []
    for comp in comps:
        local = {rel: i for i, rel in enumerate(comp)}
        cg = QueryGraph(
            [Relation(local[r], sub.relations[r].name, sub.relations[r].cardinality) for r in comp],
            [
                Predicate(local[p.rel_a], local[p.rel_b], p.selectivity)
                for p in sub.predicates
                if p.rel_a in local and p.rel_b in local
            ],
        )
        tree = _relabel(adaptive(cg).tree, tuple(comp))
        size = 1.0
        for r in comp:
            size *= sub.relations[r].cardinality
        pieces.append((size, comp[0], tree))
    while len(pieces) > 1:
        pieces.sort()
        (sa, ia, ta), (sb, _, tb) = pieces[0], pieces[1]
        pieces = [(sa * sb, ia, Join(ta, tb))] + pieces[2:]
    return pieces[0][2]


def _anchor_p_max(n_relations: int, depth: int) -> int:
    # anchors sit at the deepest level: R relations minus two per join on
    # the root path, floored at zero
    return max(0, n_relations - 2 * depth)


def hybrid_milp(
    graph: QueryGraph,
    depths: tuple[int, ...] = DEFAULT_DEPTHS,
    config: Optional[SolverConfig] = None,
    threshold_count: int = 5,
    max_workers: Optional[int] = None,
) -> PlanResult:
    """Best plan among the adaptive reference and all per-depth MILP results."""
    t0 = time.monotonic()
    if not depths:
        raise InvalidArgumentError("depths must be nonempty")
    if config is None:
        config = default_solver_config()
    R = graph.n_relations

    if R == 1:
        return PlanResult(ALGORITHM, Leaf(0), 0.0, time.monotonic() - t0)
    sol_adpt = adaptive(graph)
    if sol_adpt.status != "ok":
        return PlanResult(
            ALGORITHM, None, None, time.monotonic() - t0, "error",
            {"reason": f"adaptive failed with status {sol_adpt.status}"},
        )
    if R == 2:
        return PlanResult(
            ALGORITHM, sol_adpt.tree, sol_adpt.cost, time.monotonic() - t0, "ok",
            {"milp_contributed": False, "reason": "two relations, single join"},
        )

    thresholds = derive_thresholds(sol_adpt.cost, threshold_count)

    def run_depth(depth: int) -> Optional[PlanResult]:
        td = time.monotonic()
        try:
            template = build_template(depth, "two_half_anchors", _anchor_p_max(R, depth))
        except InvalidArgumentError as exc:
            return PlanResult(ALGORITHM, None, None, 0.0, "error", {"depth": depth, "reason": str(exc)})
        if template.capacity() < R - 1:
            return PlanResult(
                ALGORITHM, None, None, 0.0, "infeasible",
                {"depth": depth, "reason": "template capacity too small"},
            )
        model = encode(graph, template, thresholds)
        assignment = solve_external(model, config)
        if not assignment.has_solution:
            return PlanResult(
                ALGORITHM, None, None, time.monotonic() - td, assignment.status,
                {"depth": depth, "reason": assignment.detail},
            )
        try:
            partial = decode(graph, template, assignment.values, model=model)
        except DecodeInfeasibleError as exc:
            logger.warning("depth %d decode failed: %s", depth, exc)
            return PlanResult(
                ALGORITHM, None, None, time.monotonic() - td, "error",
                {"depth": depth, "reason": str(exc)},
            )
        sub_solutions = {}
        for sub in derive_part_problems(graph, partial):
            local_tree = _solve_subproblem(sub.graph)
            sub_solutions[sub.anchor_slot] = _relabel(local_tree, sub.to_parent)
        tree = stitch(partial, sub_solutions)
        return PlanResult(
            ALGORITHM, tree, plan_cost(graph, tree), time.monotonic() - td, "ok",
            {"depth": depth, "solver_status": assignment.status},
        )

    workers = max_workers or len(depths)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        depth_results = list(pool.map(run_depth, depths))

    candidates = [sol_adpt] + [r for r in depth_results if r is not None and r.status == "ok"]
    best = min(candidates, key=lambda r: r.cost)
    assert not validate_tree(graph, best.tree)

    meta = {
        "milp_contributed": best is not sol_adpt,
        "adaptive_cost": sol_adpt.cost,
        "depth_statuses": {
            r.meta.get("depth"): r.status for r in depth_results if r is not None
        },
    }
    if best is sol_adpt and all(r.status != "ok" for r in depth_results if r is not None):
        meta["fallback"] = "no MILP configuration produced a plan"
    if "depth" in best.meta:
        meta["depth"] = best.meta["depth"]
    return PlanResult(ALGORITHM, best.tree, best.cost, time.monotonic() - t0, "ok", meta)

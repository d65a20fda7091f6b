"""Domain model for join ordering: query graphs, join trees, and the exact
cost evaluator shared by every algorithm in the package.

A query graph holds base relations (with cardinalities) and join predicates
(with selectivities). A join tree is a binary tree whose leaves are relation
ids; its cost is the sum of intermediate result sizes over all internal
nodes except the final (root) join, which is identical for every complete
plan and therefore excluded.

All types are immutable after construction and all functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


class InvalidArgumentError(ValueError):
    """Raised when an operation receives arguments violating its contract."""


class InvalidTreeError(ValueError):
    """Raised when a join tree does not fit the query graph it is used with."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid join tree: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Relation:
    """A base relation: numeric id, label, and row count (>= 1)."""

    id: int
    name: str
    cardinality: float

    def __post_init__(self):
        if self.cardinality < 1:
            raise InvalidArgumentError(
                f"relation {self.id} ({self.name}): cardinality must be >= 1, "
                f"got {self.cardinality}"
            )


@dataclass(frozen=True)
class Predicate:
    """A join predicate between two distinct relations with selectivity in (0, 1]."""

    rel_a: int
    rel_b: int
    selectivity: float

    def __post_init__(self):
        if self.rel_a == self.rel_b:
            raise InvalidArgumentError(
                f"predicate must reference two distinct relations, got {self.rel_a} twice"
            )
        if not (0.0 < self.selectivity <= 1.0):
            raise InvalidArgumentError(
                f"predicate ({self.rel_a},{self.rel_b}): selectivity out of (0,1]: "
                f"{self.selectivity}"
            )


class QueryGraph:
    """Immutable query graph over relations 0..R-1.

    Multiple input predicates on the same relation pair are merged at
    construction time by multiplying their selectivities, so the stored
    predicate list has at most one entry per unordered pair.

    Disconnected graphs are accepted; joining unconnected operand sets is a
    cross product with selectivity 1.
    """

    __slots__ = ("relations", "predicates", "_sel", "_adj")

    def __init__(self, relations: Iterable[Relation], predicates: Iterable[Predicate]):
        rels = tuple(sorted(relations, key=lambda r: r.id))
        ids = [r.id for r in rels]
        if ids != list(range(len(rels))):
            raise InvalidArgumentError(
                f"relation ids must be exactly 0..R-1 and unique, got {ids}"
            )
        if len(rels) == 0:
            raise InvalidArgumentError("a query graph needs at least one relation")

        merged: dict[tuple[int, int], float] = {}
        for p in predicates:
            for end in (p.rel_a, p.rel_b):
                if not (0 <= end < len(rels)):
                    raise InvalidArgumentError(
                        f"predicate ({p.rel_a},{p.rel_b}) references unknown relation {end}"
                    )
            key = (min(p.rel_a, p.rel_b), max(p.rel_a, p.rel_b))
            merged[key] = merged.get(key, 1.0) * p.selectivity

        self.relations = rels
        self.predicates = tuple(
            Predicate(a, b, s) for (a, b), s in sorted(merged.items())
        )
        self._sel = {(p.rel_a, p.rel_b): p.selectivity for p in self.predicates}
        adj: list[list[tuple[int, float]]] = [[] for _ in rels]
        for p in self.predicates:
            adj[p.rel_a].append((p.rel_b, p.selectivity))
            adj[p.rel_b].append((p.rel_a, p.selectivity))
        self._adj = tuple(tuple(sorted(nbrs)) for nbrs in adj)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    def cardinality(self, rel: int) -> float:
        return self.relations[rel].cardinality

    def selectivity(self, a: int, b: int) -> float:
        """Selectivity between two relations; 1.0 when no predicate joins them."""
        return self._sel.get((min(a, b), max(a, b)), 1.0)

    def has_predicate(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._sel

    def neighbors(self, rel: int) -> tuple[tuple[int, float], ...]:
        """(other relation, selectivity) pairs adjacent to `rel`, sorted by id."""
        return self._adj[rel]

    def connected_components(self) -> list[list[int]]:
        seen = [False] * self.n_relations
        comps = []
        for start in range(self.n_relations):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w, _ in self._adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.connected_components()) == 1

    def is_tree(self) -> bool:
        return self.is_connected() and self.n_predicates == self.n_relations - 1

    def __eq__(self, other):
        if not isinstance(other, QueryGraph):
            return NotImplemented
        return self.relations == other.relations and self.predicates == other.predicates

    def __repr__(self):
        return f"QueryGraph(R={self.n_relations}, P={self.n_predicates})"


@dataclass(frozen=True)
class Leaf:
    """Join tree leaf: a single base relation."""

    rel: int


@dataclass(frozen=True)
class Join:
    """Inner join tree node with two subtrees."""

    left: "JoinTree"
    right: "JoinTree"


JoinTree = Union[Leaf, Join]


def tree_leaves(tree: JoinTree) -> Iterator[int]:
    """Yield leaf relation ids left to right."""
    stack = [tree]
    out = []
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node.rel)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return iter(out)


def left_deep_tree(order: Iterable[int]) -> JoinTree:
    """Build the left-deep tree joining relations in the given order."""
    seq = list(order)
    if not seq:
        raise InvalidArgumentError("cannot build a tree over zero relations")
    tree: JoinTree = Leaf(seq[0])
    for rel in seq[1:]:
        tree = Join(tree, Leaf(rel))
    return tree


def tree_to_string(tree: JoinTree, graph: Optional[QueryGraph] = None) -> str:
    """Render a tree like ((A B) C); uses relation names when a graph is given."""
    if isinstance(tree, Leaf):
        return graph.relations[tree.rel].name if graph else str(tree.rel)
    return f"({tree_to_string(tree.left, graph)} {tree_to_string(tree.right, graph)})"


@dataclass(frozen=True)
class PlanResult:
    """Outcome of one join-ordering algorithm run."""

    algorithm: str
    tree: Optional[JoinTree] = None
    cost: Optional[float] = None
    wall_time: float = 0.0
    status: str = "ok"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.status == "ok" and (self.tree is None or self.cost is None):
            raise InvalidArgumentError("status 'ok' requires both tree and cost")
        if self.status != "ok" and self.cost is not None:
            raise InvalidArgumentError(f"status {self.status!r} must not carry a cost")


def intermediate_cardinality(graph: QueryGraph, relset: Iterable[int]) -> float:
    """Size of the intermediate result joining exactly the given relations.

    Computes the product of the member cardinalities times the product of the
    selectivities of every predicate with both ends inside the set.
    """
    rels = set(relset)
    if not rels:
        raise InvalidArgumentError("relation set must be nonempty")
    size = 1.0
    for r in rels:
        if not (0 <= r < graph.n_relations):
            raise InvalidArgumentError(f"unknown relation id {r}")
        size *= graph.relations[r].cardinality
    for p in graph.predicates:
        if p.rel_a in rels and p.rel_b in rels:
            size *= p.selectivity
    return size


def validate_tree(graph: QueryGraph, tree: JoinTree) -> list[str]:
    """Check a join tree against the graph; returns violations (empty = ok)."""
    violations = []
    counts: dict[int, int] = {}
    n_joins = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            if not (0 <= node.rel < graph.n_relations):
                violations.append(f"leaf references unknown relation {node.rel}")
            else:
                counts[node.rel] = counts.get(node.rel, 0) + 1
        elif isinstance(node, Join):
            n_joins += 1
            stack.append(node.left)
            stack.append(node.right)
        else:
            violations.append(f"unexpected node type {type(node).__name__}")
    for rel in range(graph.n_relations):
        c = counts.get(rel, 0)
        if c == 0:
            violations.append(f"relation {graph.relations[rel].name} ({rel}) missing")
        elif c > 1:
            violations.append(
                f"duplicate leaf {graph.relations[rel].name} ({rel}): appears {c} times"
            )
    n_leaves = sum(counts.values())
    if not violations and n_joins != n_leaves - 1:
        violations.append(f"expected {n_leaves - 1} join nodes, found {n_joins}")
    return violations


def plan_cost(graph: QueryGraph, tree: JoinTree) -> float:
    """Exact cost of a join tree: sum of intermediate result sizes over all
    join nodes except the root.

    Raises InvalidTreeError when the tree does not cover the graph's
    relations exactly once each.
    """
    violations = validate_tree(graph, tree)
    if violations:
        raise InvalidTreeError(violations)
    if isinstance(tree, Leaf):
        return 0.0

    # the root term is never added (subtracting it afterwards would cancel
    # catastrophically when it dominates the remaining sum)
    def visit(node: JoinTree) -> tuple[set[int], float]:
        if isinstance(node, Leaf):
            return {node.rel}, 0.0
        lset, lcost = visit(node.left)
        rset, rcost = visit(node.right)
        lset |= rset
        return lset, lcost + rcost + intermediate_cardinality(graph, lset)

    _, lcost = visit(tree.left)
    _, rcost = visit(tree.right)
    return lcost + rcost


def log2_cardinality(graph: QueryGraph, rel: int) -> float:
    """Base-2 log of a relation's cardinality."""
    return math.log2(graph.relations[rel].cardinality)


def log2_selectivity(pred: Predicate) -> float:
    """Base-2 log of a predicate's selectivity (<= 0)."""
    return math.log2(pred.selectivity)

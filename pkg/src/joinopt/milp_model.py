"""Template-based MILP encoding of join ordering.

The model optimizes over join trees *encompassed by a template*: a rooted
arrangement of join slots of which exactly R-1 become active. Costs are
approximated through threshold levels: a binary variable per (threshold,
slot) pair is forced on whenever the slot's log-space output size exceeds
the threshold, and the objective charges threshold weights.

Variables (one kind per slot family):

* ``ja_<j>``      join slot j is active
* ``roj_<r>_<j>`` relation r is an operand of slot j
* ``pao_<p>_<j>`` predicate p applies at slot j
* ``trj_<t>_<j>`` threshold t is exceeded by slot j (non-root slots only)
* ``nap_<j>``     extra predecessors absorbed by anchor slot j (integer)

Constraint families (letter tags are stable identifiers used in decode
errors):

* A  active-join count: sum ja (+ sum nap over anchors) = R-1
* B  connectivity: an active slot forces its parent active
* B' anchor gating: nap_j <= p_max * ja_j
* C  operand count: operands = 2*ja + active descendants (+ their nap)
* C' anchor operand count: operands = 2*ja + nap
* D  operand continuity: operands propagate to the parent slot
* E  operands only on active slots
* F  sibling slots cannot share an operand
* G  a predicate applies only when both its relations are operands
* H  threshold activation (big-M in log space)

The root slot carries no threshold variables and contributes nothing to the
objective; the final join's size is identical for every complete plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .core import (
    InvalidArgumentError,
    Join,
    JoinTree,
    Leaf,
    QueryGraph,
    intermediate_cardinality,
    log2_cardinality,
    log2_selectivity,
)

# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinSlot:
    """One join position in a template; anchors are leaf slots that may
    absorb an unspecified subtree of up to p_max extra joins."""

    id: int
    children: tuple[int, ...] = ()
    is_anchor: bool = False
    p_max: Optional[int] = None

    def __post_init__(self):
        if len(self.children) > 2:
            raise InvalidArgumentError(f"slot {self.id}: more than two children")
        if self.is_anchor:
            if self.children:
                raise InvalidArgumentError(f"anchor slot {self.id} must be a leaf")
            if self.p_max is None or self.p_max < 0:
                raise InvalidArgumentError(f"anchor slot {self.id} needs p_max >= 0")
        elif self.p_max is not None:
            raise InvalidArgumentError(f"non-anchor slot {self.id} must not set p_max")


class JoinTemplate:
    """A rooted tree of join slots bounding the MILP search space."""

    def __init__(self, slots: Iterable[JoinSlot], root_slot: int):
        self.slots = tuple(sorted(slots, key=lambda s: s.id))
        ids = [s.id for s in self.slots]
        if ids != list(range(len(self.slots))):
            raise InvalidArgumentError(f"slot ids must be 0..J-1, got {ids}")
        self.root_slot = root_slot
        parent = {root_slot: None}
        stack = [root_slot]
        seen = {root_slot}
        while stack:
            j = stack.pop()
            for c in self.slots[j].children:
                if c in seen:
                    raise InvalidArgumentError(f"slot {c} has two parents or a cycle")
                seen.add(c)
                parent[c] = j
                stack.append(c)
        if len(seen) != len(self.slots):
            raise InvalidArgumentError("template slots do not form one rooted tree")
        self.parent = parent
        self.anchors = tuple(s.id for s in self.slots if s.is_anchor)
        # all direct or indirect predecessors (descendants in the slot tree)
        desc: dict[int, tuple[int, ...]] = {}
        for j in self._postorder():
            acc: list[int] = []
            for c in self.slots[j].children:
                acc.append(c)
                acc.extend(desc[c])
            desc[j] = tuple(sorted(acc))
        self.descendants = desc

    def _postorder(self) -> list[int]:
        out, stack = [], [(self.root_slot, False)]
        while stack:
            j, expanded = stack.pop()
            if expanded:
                out.append(j)
                continue
            stack.append((j, True))
            for c in self.slots[j].children:
                stack.append((c, False))
        return out

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def depth_of(self, slot: int) -> int:
        """Number of slots on the path from the root to `slot`, inclusive."""
        d, j = 1, slot
        while self.parent[j] is not None:
            j = self.parent[j]
            d += 1
        return d

    def capacity(self) -> int:
        """Maximum number of joins this template can host (slots + anchor room)."""
        return self.n_slots + sum(s.p_max for s in self.slots if s.is_anchor)

    def __repr__(self):
        return (
            f"JoinTemplate(J={self.n_slots}, root={self.root_slot}, "
            f"anchors={list(self.anchors)})"
        )


def build_template(
    max_depth: int, anchor_spec: str = "none", p_max: int = 0
) -> JoinTemplate:
    """Complete binary template of `max_depth` levels (2**max_depth - 1 slots).

    With anchor_spec="two_half_anchors" the deepest slot on the leftmost path
    of each root subtree becomes an anchor with the given p_max.
    """
    if max_depth < 1:
        raise InvalidArgumentError("max_depth must be >= 1")
    if anchor_spec not in ("none", "two_half_anchors"):
        raise InvalidArgumentError(f"unknown anchor_spec {anchor_spec!r}")
    n = (1 << max_depth) - 1
    anchor_ids = set()
    if anchor_spec == "two_half_anchors":
        if max_depth < 2:
            raise InvalidArgumentError("two_half_anchors needs max_depth >= 2")
        for half_root in (1, 2):
            j = half_root
            while 2 * j + 1 < n:  # follow left children to the deepest level
                j = 2 * j + 1
            anchor_ids.add(j)
    slots = []
    for j in range(n):
        kids = tuple(c for c in (2 * j + 1, 2 * j + 2) if c < n)
        if j in anchor_ids:
            slots.append(JoinSlot(j, (), True, p_max))
        else:
            slots.append(JoinSlot(j, kids))
    return JoinTemplate(slots, 0)


def universal_template(n_joins: int) -> JoinTemplate:
    """Smallest template hosting every bushy tree of up to `n_joins` joins.

    Join costs are invariant under swapping a join's children, so only one
    of each mirrored shape pair needs to be representable: the root's heavier
    side goes left, which bounds the right subtree to (n-1)//2 joins. The
    recursion yields templates far smaller than the complete binary tree of
    the same expressiveness (17 slots instead of 127 for 7 joins).
    """
    if n_joins < 1:
        raise InvalidArgumentError("n_joins must be >= 1")
    slots: list[JoinSlot] = []

    def make(k: int) -> int:
        my_id = len(slots)
        slots.append(JoinSlot(my_id))  # placeholder, children patched below
        kids = []
        if k - 1 >= 1:
            kids.append(make(k - 1))
        if (k - 1) // 2 >= 1:
            kids.append(make((k - 1) // 2))
        slots[my_id] = JoinSlot(my_id, tuple(kids))
        return my_id

    make(n_joins)
    return JoinTemplate(slots, 0)


# ---------------------------------------------------------------------------
# Thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    """Strictly ascending positive cost levels used by the approximation."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise InvalidArgumentError("at least one threshold required")
        if any(v <= 0 for v in self.values):
            raise InvalidArgumentError("thresholds must be positive")
        if any(a >= b for a, b in zip(self.values, self.values[1:])):
            raise InvalidArgumentError("thresholds must be strictly ascending")

    def __len__(self):
        return len(self.values)

    def weights(self, mode: str) -> tuple[float, ...]:
        """Objective weight per threshold: raw levels ("plain") or increments
        over the previous level ("incremental", avoids double charging)."""
        if mode == "plain":
            return self.values
        if mode == "incremental":
            return tuple(
                v - (self.values[i - 1] if i else 0.0)
                for i, v in enumerate(self.values)
            )
        raise InvalidArgumentError(f"unknown weight mode {mode!r}")


def derive_thresholds(reference_cost: float, count: int = 5) -> Thresholds:
    """Powers of two ending at the first power strictly above reference_cost.

    Returns {2**(k-count+1), ..., 2**k} where 2**k is the smallest power of
    two strictly exceeding the reference cost.
    """
    if reference_cost <= 0:
        raise InvalidArgumentError("reference_cost must be positive")
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    k = math.ceil(math.log2(reference_cost))
    while 2.0**k <= reference_cost:
        k += 1
    while k > 0 and 2.0 ** (k - 1) > reference_cost:
        k -= 1
    return Thresholds(tuple(2.0**t for t in range(k - count + 1, k + 1)))


def power_of_two_thresholds(lo: float, hi: float) -> Thresholds:
    """All powers of two covering [lo, hi] (grid for approximation bounds)."""
    if not (0 < lo <= hi):
        raise InvalidArgumentError("need 0 < lo <= hi")
    k0 = math.floor(math.log2(lo))
    k1 = math.ceil(math.log2(hi))
    if 2.0**k1 < hi:
        k1 += 1
    return Thresholds(tuple(2.0**t for t in range(k0, k1 + 1)))


# ---------------------------------------------------------------------------
# Model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" | "integer"
    bounds: tuple[int, int]

    def __post_init__(self):
        if self.kind not in ("binary", "integer"):
            raise InvalidArgumentError(f"unknown variable kind {self.kind!r}")


@dataclass(frozen=True)
class Constraint:
    name: str
    family: str
    coefficients: tuple[tuple[str, float], ...]
    sense: str  # "<=", "=", ">="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", "=", ">="):
            raise InvalidArgumentError(f"unknown sense {self.sense!r}")


@dataclass(frozen=True)
class MilpModel:
    """Solver-neutral minimization model."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[str, float], ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("variable names must be unique")
        declared = set(names)
        for c in self.constraints:
            for n, _ in c.coefficients:
                if n not in declared:
                    raise InvalidArgumentError(
                        f"constraint {c.name} references undeclared variable {n}"
                    )
        for n, _ in self.objective:
            if n not in declared:
                raise InvalidArgumentError(f"objective references undeclared variable {n}")

    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def objective_value(self, values: Mapping[str, float]) -> float:
        return sum(c * values[n] for n, c in self.objective)


class DecodeInfeasibleError(ValueError):
    """An assignment failed re-verification; carries the constraint family."""

    def __init__(self, family: str, detail: str):
        self.family = family
        super().__init__(f"assignment violates constraint family {family}: {detail}")


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _var(name_parts) -> str:
    return "_".join(str(p) for p in name_parts)


def encode(
    graph: QueryGraph,
    template: JoinTemplate,
    thresholds: Thresholds,
    weight_mode: str = "incremental",
) -> MilpModel:
    """Build the MILP for a query graph over a join template.

    weight_mode selects the objective weighting of threshold variables:
    "incremental" charges level increments (the default; approximates the
    cost without double counting), "plain" charges raw levels (constant
    offset per exceeded level stack, same ranking on uniform grids).
    """
    R = graph.n_relations
    if R < 2:
        raise InvalidArgumentError("encoding needs at least 2 relations")
    if template.capacity() < R - 1:
        raise InvalidArgumentError(
            f"template too small: capacity {template.capacity()} cannot host "
            f"{R - 1} joins (infeasible by construction)"
        )

    slots = template.slots
    root = template.root_slot
    nonroot = [s.id for s in slots if s.id != root]
    preds = graph.predicates
    T = len(thresholds)
    weights = thresholds.weights(weight_mode)

    variables: list[Variable] = []
    for s in slots:
        variables.append(Variable(_var(("ja", s.id)), "binary", (0, 1)))
    for r in range(R):
        for s in slots:
            variables.append(Variable(_var(("roj", r, s.id)), "binary", (0, 1)))
    for p in range(len(preds)):
        for s in slots:
            variables.append(Variable(_var(("pao", p, s.id)), "binary", (0, 1)))
    for t in range(T):
        for j in nonroot:
            variables.append(Variable(_var(("trj", t, j)), "binary", (0, 1)))
    for j in template.anchors:
        variables.append(
            Variable(_var(("nap", j)), "integer", (0, slots[j].p_max))
        )

    cons: list[Constraint] = []

    # (A) / (A'): exactly R-1 active joins, anchors absorb via nap
    coeffs = [(_var(("ja", s.id)), 1.0) for s in slots]
    coeffs += [(_var(("nap", j)), 1.0) for j in template.anchors]
    cons.append(Constraint("A", "A", tuple(coeffs), "=", float(R - 1)))

    # (B): active slot implies active parent
    for j in nonroot:
        q = template.parent[j]
        cons.append(
            Constraint(
                f"B_{j}", "B",
                ((_var(("ja", j)), 1.0), (_var(("ja", q)), -1.0)),
                "<=", 0.0,
            )
        )

    # (B'): anchor absorption requires the anchor to be active
    for j in template.anchors:
        cons.append(
            Constraint(
                f"Bp_{j}", "B'",
                ((_var(("nap", j)), 1.0), (_var(("ja", j)), -float(slots[j].p_max))),
                "<=", 0.0,
            )
        )

    # (C) / (C'): operand count = 2*ja + active predecessors (incl. absorbed)
    for s in slots:
        j = s.id
        coeffs = [(_var(("roj", r, j)), 1.0) for r in range(R)]
        coeffs.append((_var(("ja", j)), -2.0))
        if s.is_anchor:
            coeffs.append((_var(("nap", j)), -1.0))
            cons.append(Constraint(f"Cp_{j}", "C'", tuple(coeffs), "=", 0.0))
        else:
            for i in template.descendants[j]:
                coeffs.append((_var(("ja", i)), -1.0))
                if slots[i].is_anchor:
                    coeffs.append((_var(("nap", i)), -1.0))
            cons.append(Constraint(f"C_{j}", "C", tuple(coeffs), "=", 0.0))

    # (D): operands persist through successor slots
    for j in nonroot:
        q = template.parent[j]
        for r in range(R):
            cons.append(
                Constraint(
                    f"D_{r}_{j}", "D",
                    ((_var(("roj", r, j)), 1.0), (_var(("roj", r, q)), -1.0)),
                    "<=", 0.0,
                )
            )

    # (E): no operands on inactive slots
    for s in slots:
        for r in range(R):
            cons.append(
                Constraint(
                    f"E_{r}_{s.id}", "E",
                    ((_var(("roj", r, s.id)), 1.0), (_var(("ja", s.id)), -1.0)),
                    "<=", 0.0,
                )
            )

    # (F): sibling slots never share an operand
    for s in slots:
        if len(s.children) == 2:
            c1, c2 = s.children
            for r in range(R):
                cons.append(
                    Constraint(
                        f"F_{r}_{c1}_{c2}", "F",
                        ((_var(("roj", r, c1)), 1.0), (_var(("roj", r, c2)), 1.0)),
                        "<=", 1.0,
                    )
                )

    # (G): predicate applicability needs both end relations as operands
    for p, pred in enumerate(preds):
        for s in slots:
            j = s.id
            for end in (pred.rel_a, pred.rel_b):
                cons.append(
                    Constraint(
                        f"G_{p}_{j}_{end}", "G",
                        ((_var(("pao", p, j)), 1.0), (_var(("roj", end, j)), -1.0)),
                        "<=", 0.0,
                    )
                )

    # (H): threshold activation over log-space output size, big-M disabled.
    # The disabling constant is chosen per threshold row: it only needs to
    # cover the largest possible log output (all cardinalities, no
    # selectivities) minus that row's right-hand side.
    log_cards = [log2_cardinality(graph, r) for r in range(R)]
    log_sels = [log2_selectivity(p) for p in preds]
    log_thetas = [math.log2(v) for v in thresholds.values]
    max_log_out = sum(max(lc, 0.0) for lc in log_cards)
    for t in range(T):
        big_m = max(1.0, max_log_out - log_thetas[t] + 1.0)
        for j in nonroot:
            # exact-zero log terms (cardinality 1, selectivity 1) drop out
            coeffs = [
                (_var(("roj", r, j)), log_cards[r]) for r in range(R) if log_cards[r] != 0.0
            ]
            coeffs += [
                (_var(("pao", p, j)), log_sels[p])
                for p in range(len(preds))
                if log_sels[p] != 0.0
            ]
            coeffs.append((_var(("trj", t, j)), -big_m))
            cons.append(
                Constraint(f"H_{t}_{j}", "H", tuple(coeffs), "<=", log_thetas[t])
            )

    objective = tuple(
        (_var(("trj", t, j)), weights[t]) for t in range(T) for j in nonroot
    )
    return MilpModel(tuple(variables), tuple(cons), objective)


# ---------------------------------------------------------------------------
# Verification and decoding
# ---------------------------------------------------------------------------

_FEAS_EPS = 1e-9


def _constraint_tolerance(con: Constraint) -> float:
    """Zero for integral-coefficient rows; solver-style epsilon otherwise."""
    scale = max([1.0, abs(con.rhs)] + [abs(c) for _, c in con.coefficients])
    integral = float(con.rhs).is_integer() and all(
        float(c).is_integer() for _, c in con.coefficients
    )
    return 0.0 if integral else _FEAS_EPS * scale


def check_assignment(model: MilpModel, values: Mapping[str, float]) -> Optional[Constraint]:
    """Exact re-verification of integer values against every constraint.

    Values are rounded to integers; the left-hand side is evaluated in exact
    rational arithmetic over the stored coefficients. Returns the first
    violated constraint, or None when all hold.
    """
    ints: dict[str, int] = {}
    for v in model.variables:
        if v.name not in values:
            raise InvalidArgumentError(f"assignment missing variable {v.name}")
        x = int(round(values[v.name]))
        if not (v.bounds[0] <= x <= v.bounds[1]):
            raise InvalidArgumentError(
                f"{v.name}={x} outside bounds {v.bounds}"
            )
        ints[v.name] = x
    for con in model.constraints:
        lhs = Fraction(0)
        for name, coef in con.coefficients:
            if ints[name]:
                lhs += Fraction(coef) * ints[name]
        rhs = Fraction(con.rhs)
        tol = Fraction(_constraint_tolerance(con))
        if con.sense == "<=" and lhs > rhs + tol:
            return con
        if con.sense == ">=" and lhs < rhs - tol:
            return con
        if con.sense == "=" and abs(lhs - rhs) > tol:
            return con
    return None


@dataclass(frozen=True)
class AnchorLeaf:
    """Placeholder leaf in a partial plan: an anchor slot's unsolved group."""

    slot: int


PartialNode = Union[Leaf, AnchorLeaf, Join]


@dataclass(frozen=True)
class PartialPlan:
    """Upper join-tree portion with unsolved anchor groups at the leaves."""

    tree: PartialNode
    anchor_groups: dict[int, frozenset[int]] = field(default_factory=dict)

    def is_complete(self) -> bool:
        return not self.anchor_groups


def decode(
    graph: QueryGraph,
    template: JoinTemplate,
    assignment: Mapping[str, float],
    model: Optional[MilpModel] = None,
    thresholds: Optional[Thresholds] = None,
) -> PartialPlan:
    """Turn a verified variable assignment into a (partial) join tree.

    The assignment is re-verified against the model constraints first (the
    model is rebuilt from graph/template/thresholds when not passed in);
    violations raise DecodeInfeasibleError naming the constraint family.
    """
    if model is None:
        if thresholds is None:
            raise InvalidArgumentError("decode needs the encoded model or its thresholds")
        model = encode(graph, template, thresholds)
    bad = check_assignment(model, assignment)
    if bad is not None:
        raise DecodeInfeasibleError(bad.family, f"constraint {bad.name} violated")

    slots = template.slots
    active = {s.id for s in slots if round(assignment[_var(("ja", s.id))]) == 1}
    operands = {
        s.id: frozenset(
            r
            for r in range(graph.n_relations)
            if round(assignment[_var(("roj", r, s.id))]) == 1
        )
        for s in slots
    }
    naps = {j: int(round(assignment[_var(("nap", j))])) for j in template.anchors}

    root = template.root_slot
    if root not in active:
        raise DecodeInfeasibleError("B", "root slot inactive with R >= 2")
    if operands[root] != frozenset(range(graph.n_relations)):
        raise DecodeInfeasibleError("C", "root slot does not cover all relations")

    anchor_groups: dict[int, frozenset[int]] = {}

    def build(j: int) -> PartialNode:
        ops = operands[j]
        if slots[j].is_anchor:
            anchor_groups[j] = ops
            return AnchorLeaf(j)
        kids = [c for c in slots[j].children if c in active]
        if len(kids) == 0:
            if len(ops) != 2:
                raise DecodeInfeasibleError("C", f"leaf slot {j} holds {len(ops)} operands")
            a, b = sorted(ops)
            return Join(Leaf(a), Leaf(b))
        if len(kids) == 1:
            c = kids[0]
            extra = ops - operands[c]
            if len(extra) != 1:
                raise DecodeInfeasibleError(
                    "D", f"slot {j} adds {len(extra)} relations over child {c}"
                )
            return Join(build(c), Leaf(next(iter(extra))))
        c1, c2 = kids
        if operands[c1] | operands[c2] != ops or operands[c1] & operands[c2]:
            raise DecodeInfeasibleError(
                "F", f"children of slot {j} do not partition its operands"
            )
        return Join(build(c1), build(c2))

    tree = build(root)

    covered: list[int] = []

    def collect(node: PartialNode):
        if isinstance(node, Leaf):
            covered.append(node.rel)
        elif isinstance(node, AnchorLeaf):
            covered.extend(anchor_groups[node.slot])
        else:
            collect(node.left)
            collect(node.right)

    collect(tree)
    if sorted(covered) != list(range(graph.n_relations)):
        raise DecodeInfeasibleError("A", "leaves and anchor groups do not partition relations")
    for j, group in anchor_groups.items():
        if len(group) != 2 + naps[j]:
            raise DecodeInfeasibleError(
                "C'", f"anchor {j} group size {len(group)} != 2 + nap {naps[j]}"
            )
    return PartialPlan(tree, anchor_groups)


# ---------------------------------------------------------------------------
# Threshold approximation of a concrete tree
# ---------------------------------------------------------------------------


def approx_cost(
    graph: QueryGraph,
    tree: JoinTree,
    thresholds: Thresholds,
    weight_mode: str = "incremental",
    include_root: bool = True,
) -> float:
    """Threshold-approximated cost of a join tree.

    Each join whose output size strictly exceeds a threshold level is charged
    that level's weight. include_root=False matches the model objective,
    which never charges the final join.
    """
    weights = thresholds.weights(weight_mode)
    charges: list[float] = []

    def visit(node: JoinTree) -> set[int]:
        if isinstance(node, Leaf):
            return {node.rel}
        rels = visit(node.left) | visit(node.right)
        ic = intermediate_cardinality(graph, rels)
        charges.append(
            sum(w for theta, w in zip(thresholds.values, weights) if ic > theta)
        )
        return rels

    visit(tree)
    if not include_root and charges:
        charges.pop()  # the root join is appended last in postorder
    return sum(charges)

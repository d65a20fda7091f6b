import math

import pytest

from joinopt.core import (
    InvalidArgumentError,
    InvalidTreeError,
    Join,
    Leaf,
    PlanResult,
    Predicate,
    QueryGraph,
    Relation,
    intermediate_cardinality,
    left_deep_tree,
    plan_cost,
    tree_leaves,
    validate_tree,
)

from conftest import rel_close, tree_query


class TestIntermediateCardinality:
    def test_single_relation(self, g0):
        assert intermediate_cardinality(g0, {0}) == 100.0

    def test_chain_prefixes(self, g0):
        assert rel_close(intermediate_cardinality(g0, {0, 1}), 10.0)
        assert rel_close(intermediate_cardinality(g0, {0, 1, 2}), 100.0)
        assert rel_close(intermediate_cardinality(g0, {0, 1, 2, 3}), 1000.0)

    def test_cross_product_pair(self, g0):
        assert intermediate_cardinality(g0, {0, 2}) == 100000.0

    def test_empty_set_rejected(self, g0):
        with pytest.raises(InvalidArgumentError):
            intermediate_cardinality(g0, set())

    def test_unknown_id_rejected(self, g0):
        with pytest.raises(InvalidArgumentError):
            intermediate_cardinality(g0, {0, 9})

    def test_all_selectivities_one_gives_plain_product(self):
        g = QueryGraph(
            [Relation(0, "a", 5), Relation(1, "b", 7), Relation(2, "c", 11)],
            [Predicate(0, 1, 1.0), Predicate(1, 2, 1.0)],
        )
        assert intermediate_cardinality(g, {0, 1, 2}) == 5 * 7 * 11


class TestPlanCost:
    def test_left_deep_chain(self, g0):
        assert rel_close(plan_cost(g0, left_deep_tree([0, 1, 2, 3])), 110.0)

    def test_two_relation_plans_cost_zero(self):
        g = QueryGraph(
            [Relation(0, "a", 50), Relation(1, "b", 60)], [Predicate(0, 1, 0.5)]
        )
        assert plan_cost(g, Join(Leaf(0), Leaf(1))) == 0.0

    def test_balanced_tree(self, g0):
        bal = Join(Join(Leaf(0), Leaf(1)), Join(Leaf(2), Leaf(3)))
        assert rel_close(plan_cost(g0, bal), 10010.0)

    def test_invalid_tree_raises_with_violation(self, g0):
        with pytest.raises(InvalidTreeError) as err:
            plan_cost(g0, Join(Join(Leaf(0), Leaf(1)), Leaf(2)))
        assert any("missing" in v for v in err.value.violations)

    def test_child_swap_invariance(self, g0):
        for seed in range(10):
            g = tree_query(7, seed)
            tree = Join(
                Join(Leaf(0), Join(Leaf(1), Leaf(2))),
                Join(Join(Leaf(3), Leaf(4)), Join(Leaf(5), Leaf(6))),
            )
            mirrored = Join(
                Join(Join(Leaf(5), Leaf(6)), Join(Leaf(4), Leaf(3))),
                Join(Join(Leaf(2), Leaf(1)), Leaf(0)),
            )
            assert plan_cost(g, tree) == plan_cost(g, mirrored)

    def test_root_term_is_constant_offset(self):
        for seed in range(10):
            g = tree_query(6, seed)
            full = intermediate_cardinality(g, range(6))
            t1 = left_deep_tree([0, 1, 2, 3, 4, 5])
            t2 = left_deep_tree([5, 4, 3, 2, 1, 0])
            incl1 = plan_cost(g, t1) + full
            incl2 = plan_cost(g, t2) + full
            assert rel_close(incl1 - plan_cost(g, t1), incl2 - plan_cost(g, t2))

    def test_cost_nonnegative(self):
        for seed in range(20):
            g = tree_query(5, seed)
            assert plan_cost(g, left_deep_tree(range(5))) > 0.0


class TestValidateTree:
    def test_valid(self, g0):
        assert validate_tree(g0, left_deep_tree([0, 1, 2, 3])) == []

    def test_missing_relation(self, g0):
        violations = validate_tree(g0, Join(Join(Leaf(0), Leaf(1)), Leaf(2)))
        assert any("missing" in v and "D" in v for v in violations)

    def test_duplicate_leaf(self, g0):
        tree = Join(Join(Leaf(0), Leaf(0)), Join(Leaf(1), Join(Leaf(2), Leaf(3))))
        violations = validate_tree(g0, tree)
        assert any("duplicate" in v and "A" in v for v in violations)

    def test_unknown_leaf(self, g0):
        violations = validate_tree(g0, Join(Leaf(0), Leaf(17)))
        assert any("unknown" in v for v in violations)


class TestQueryGraph:
    def test_duplicate_predicates_merge_multiplicatively(self):
        g = QueryGraph(
            [Relation(0, "a", 10), Relation(1, "b", 10)],
            [Predicate(0, 1, 0.5), Predicate(1, 0, 0.25)],
        )
        assert g.n_predicates == 1
        assert g.selectivity(0, 1) == 0.125

    def test_bad_relation_ids(self):
        with pytest.raises(InvalidArgumentError):
            QueryGraph([Relation(1, "a", 10)], [])

    def test_bad_selectivity(self):
        with pytest.raises(InvalidArgumentError):
            Predicate(0, 1, 1.5)
        with pytest.raises(InvalidArgumentError):
            Predicate(0, 1, 0.0)

    def test_cardinality_floor(self):
        with pytest.raises(InvalidArgumentError):
            Relation(0, "a", 0.5)

    def test_self_join_predicate_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Predicate(2, 2, 0.5)

    def test_disconnected_graph_accepted(self):
        g = QueryGraph(
            [Relation(0, "a", 10), Relation(1, "b", 10), Relation(2, "c", 10)],
            [Predicate(0, 1, 0.5)],
        )
        assert not g.is_connected()
        assert len(g.connected_components()) == 2


class TestPlanResult:
    def test_ok_requires_tree_and_cost(self):
        with pytest.raises(InvalidArgumentError):
            PlanResult("x", None, None, 0.0, "ok")

    def test_failure_carries_no_cost(self):
        with pytest.raises(InvalidArgumentError):
            PlanResult("x", None, 3.0, 0.0, "timeout")
        r = PlanResult("x", None, None, 0.1, "timeout")
        assert r.status == "timeout"


def test_tree_leaves_order():
    tree = Join(Join(Leaf(2), Leaf(0)), Leaf(1))
    assert list(tree_leaves(tree)) == [2, 0, 1]


def test_no_root_cancellation_at_scale():
    # the root join can dominate the true cost by many orders of magnitude;
    # the evaluator must not lose the non-root sum to cancellation
    g = tree_query(30, seed=7)
    cost = plan_cost(g, left_deep_tree(range(30)))
    assert cost > 0.0
    assert math.isfinite(cost)

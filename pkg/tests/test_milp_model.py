import pytest

from joinopt.core import (
    InvalidArgumentError,
    Join,
    Leaf,
    intermediate_cardinality,
    left_deep_tree,
    plan_cost,
    validate_tree,
)
from joinopt.milp_model import (
    AnchorLeaf,
    DecodeInfeasibleError,
    JoinSlot,
    JoinTemplate,
    Thresholds,
    approx_cost,
    build_template,
    check_assignment,
    decode,
    derive_thresholds,
    encode,
    power_of_two_thresholds,
    universal_template,
)
from joinopt.milp_solver import enumerate_assignments, solve_reference

from conftest import rel_close, tree_query
from oracles import all_bushy_trees


def fig_template() -> JoinTemplate:
    """Root with a two-slot chain on the left and a leaf slot on the right."""
    return universal_template(3)


class TestTemplates:
    def test_build_depth2(self):
        t = build_template(2)
        assert t.n_slots == 3
        assert t.slots[0].children == (1, 2)
        assert not t.anchors

    def test_build_depth4_two_anchors(self):
        t = build_template(4, "two_half_anchors", p_max=3)
        assert t.n_slots == 15
        assert len(t.anchors) == 2
        for a in t.anchors:
            assert t.slots[a].is_anchor and t.slots[a].p_max == 3
            assert t.depth_of(a) == 4

    def test_depth_zero_rejected(self):
        with pytest.raises(InvalidArgumentError):
            build_template(0)

    def test_fig_shape_as_custom_template(self):
        t = JoinTemplate(
            [JoinSlot(0, (1, 3)), JoinSlot(1, (2,)), JoinSlot(2), JoinSlot(3)], 0
        )
        assert t.n_slots == 4
        assert t.descendants[0] == (1, 2, 3)
        assert fig_template().slots == t.slots

    def test_anchor_invariants(self):
        with pytest.raises(InvalidArgumentError):
            JoinSlot(0, (1,), True, 2)  # anchors must be leaves
        with pytest.raises(InvalidArgumentError):
            JoinSlot(0, (), True)  # anchors need p_max
        with pytest.raises(InvalidArgumentError):
            JoinSlot(0, (), False, 1)  # p_max only on anchors

    def test_malformed_templates(self):
        with pytest.raises(InvalidArgumentError):
            JoinTemplate([JoinSlot(0, (1, 1)), JoinSlot(1)], 0)  # duplicate child
        with pytest.raises(InvalidArgumentError):
            JoinTemplate([JoinSlot(0), JoinSlot(1)], 0)  # slot 1 unreachable

    def test_universal_template_hosts_every_shape(self):
        # every 5-relation bushy tree must embed (up to child swaps)
        tpl = universal_template(4)

        def shapes(slot):
            # set of (joins-used, frozenset of embeddable leaf-count splits)
            return slot

        # structural check: template capacity and per-subtree sizes
        assert tpl.n_slots == 6
        # verify by exhaustive embedding: each tree's canonical depth profile fits
        def embeds(tree, slot) -> bool:
            if isinstance(tree, Leaf):
                return True
            kids = [c for c in (tree.left, tree.right)]
            joins = [k for k in kids if isinstance(k, Join)]
            slots = list(tpl.slots[slot].children)
            if len(joins) > len(slots):
                return False
            if len(joins) == 0:
                return True
            if len(joins) == 1:
                return any(embeds(joins[0], s) for s in slots)
            if len(slots) < 2:
                return False
            a, b = joins
            s1, s2 = slots
            return (embeds(a, s1) and embeds(b, s2)) or (
                embeds(a, s2) and embeds(b, s1)
            )

        import itertools

        for tree in all_bushy_trees(range(5)):
            canon = tree
            assert embeds(canon, 0) or embeds(Join(canon.right, canon.left), 0) or _embeds_any_mirror(
                tpl, canon
            ), tree

    def test_capacity(self):
        t = build_template(3, "two_half_anchors", p_max=4)
        assert t.capacity() == 7 + 8


def _embeds_any_mirror(tpl, tree) -> bool:
    """Exhaustive mirror search: some child-swapped variant embeds."""

    def variants(t):
        if isinstance(t, Leaf):
            yield t
            return
        for lv in variants(t.left):
            for rv in variants(t.right):
                yield Join(lv, rv)
                yield Join(rv, lv)

    def embeds(tree, slot) -> bool:
        if isinstance(tree, Leaf):
            return True
        joins = [k for k in (tree.left, tree.right) if isinstance(k, Join)]
        slots = list(tpl.slots[slot].children)
        if len(joins) > len(slots):
            return False
        if not joins:
            return True
        if len(joins) == 1:
            return any(embeds(joins[0], s) for s in slots)
        if len(slots) < 2:
            return False
        return embeds(joins[0], slots[0]) and embeds(joins[1], slots[1])

    return any(embeds(v, 0) for v in variants(tree))


class TestThresholds:
    def test_reference_1110(self):
        th = derive_thresholds(1110.0, 5)
        assert th.values == (128.0, 256.0, 512.0, 1024.0, 2048.0)

    def test_reference_one(self):
        assert derive_thresholds(1.0, 1).values == (2.0,)

    def test_exact_power_is_strictly_exceeded(self):
        assert derive_thresholds(2048.0, 2).values == (2048.0, 4096.0)

    def test_fractional_levels_allowed(self):
        th = derive_thresholds(3.0, 5)
        assert th.values == (0.25, 0.5, 1.0, 2.0, 4.0)

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            derive_thresholds(0.0, 5)
        with pytest.raises(InvalidArgumentError):
            derive_thresholds(10.0, 0)
        with pytest.raises(InvalidArgumentError):
            Thresholds((4.0, 2.0))
        with pytest.raises(InvalidArgumentError):
            Thresholds(())

    def test_incremental_weights_telescope(self):
        th = Thresholds((10.0, 100.0, 1000.0))
        assert th.weights("plain") == (10.0, 100.0, 1000.0)
        assert th.weights("incremental") == (10.0, 90.0, 900.0)

    def test_power_grid_covers(self):
        th = power_of_two_thresholds(1.0, 900.0)
        assert th.values[0] == 1.0 and th.values[-1] >= 900.0


class TestEncode:
    def test_variable_counts_fig1(self, g0):
        model = encode(g0, fig_template(), Thresholds((10.0, 100.0)))
        kinds = {}
        for v in model.variables:
            kinds[v.name.split("_")[0]] = kinds.get(v.name.split("_")[0], 0) + 1
        assert kinds == {"ja": 4, "roj": 16, "pao": 12, "trj": 6}
        assert len(model.variables) == 38

    def test_anchor_variables(self, g0):
        tpl = build_template(2, "two_half_anchors", p_max=1)
        model = encode(g0, tpl, Thresholds((16.0,)))
        names = model.variable_names()
        assert "nap_1" in names and "nap_2" in names

    def test_template_too_small(self):
        g = tree_query(8, 0)
        with pytest.raises(InvalidArgumentError, match="infeasible by construction"):
            encode(g, build_template(2), Thresholds((4.0,)))

    def test_constraint_families_present(self, g0):
        model = encode(g0, fig_template(), Thresholds((10.0, 100.0)))
        families = {c.family for c in model.constraints}
        assert families == {"A", "B", "C", "D", "E", "F", "G", "H"}

    def test_anchor_constraint_families(self, g0):
        tpl = build_template(2, "two_half_anchors", p_max=1)
        model = encode(g0, tpl, Thresholds((16.0,)))
        families = {c.family for c in model.constraints}
        assert "B'" in families and "C'" in families

    def test_root_has_no_threshold_variables(self, g0):
        model = encode(g0, fig_template(), Thresholds((10.0, 100.0)))
        assert not any(n.startswith("trj_") and n.endswith("_0") for n in model.variable_names())
        assert all(name.startswith("trj_") for name, _ in model.objective)


class TestFig1Model:
    """Reference-solver enumeration over the running 4-relation example."""

    def _model(self, g0):
        return encode(g0, fig_template(), Thresholds((10.0, 100.0)))

    def test_exactly_two_activation_patterns(self, g0):
        model = self._model(g0)
        patterns = set()
        for asg in enumerate_assignments(model, variables=["ja_0", "ja_1", "ja_2", "ja_3"]):
            patterns.add(tuple(asg[f"ja_{j}"] for j in range(4)))
        assert patterns == {(1, 1, 1, 0), (1, 1, 0, 1)}

    def test_every_feasible_assignment_decodes_valid(self, g0):
        model = self._model(g0)
        tpl = fig_template()
        core_vars = [n for n in model.variable_names() if n.startswith(("ja_", "roj_"))]
        trees = set()
        count = 0
        for asg in enumerate_assignments(model, variables=core_vars):
            full = dict(asg)
            # tight completion: predicates on when both ends present, trj as forced
            for v in model.variables:
                if v.name not in full:
                    full[v.name] = 0
            for t in range(2):
                for j in (1, 2, 3):
                    # activate trj wherever needed to satisfy the big-M rows
                    full[f"trj_{t}_{j}"] = 1
            partial = decode(g0, tpl, full, model=model)
            assert partial.is_complete()
            assert validate_tree(g0, partial.tree) == []
            trees.add(_canon(partial.tree))
            count += 1
        # shapes: left-deep over slots (0,1,2) and balanced over (0,1,3)
        shapes = {_shape(t) for t in trees}
        assert shapes == {"(.(.(..)))", "((..)(..))"}
        assert count == 18  # 12 left-deep labelings + 6 balanced slot labelings

    def test_completeness_matches_template_tree_set(self, g0):
        model = self._model(g0)
        tpl = fig_template()
        core_vars = [n for n in model.variable_names() if n.startswith(("ja_", "roj_"))]
        got = set()
        for asg in enumerate_assignments(model, variables=core_vars):
            full = {v.name: asg.get(v.name, 0) for v in model.variables}
            for t in range(2):
                for j in (1, 2, 3):
                    full[f"trj_{t}_{j}"] = 1
            got.add(_canon(decode(g0, tpl, full, model=model).tree))
        expected = set()
        # template embeds: all left-deep trees and all balanced trees
        import itertools

        for perm in itertools.permutations(range(4)):
            expected.add(_canon(left_deep_tree(perm)))
        for pair in itertools.combinations(range(4), 2):
            rest = tuple(r for r in range(4) if r not in pair)
            expected.add(
                _canon(Join(Join(Leaf(pair[0]), Leaf(pair[1])), Join(Leaf(rest[0]), Leaf(rest[1]))))
            )
        assert got == expected


def _canon(tree):
    """Canonical form modulo child swaps (frozenset nesting)."""
    if isinstance(tree, Leaf):
        return tree.rel
    return frozenset((_canon(tree.left), _canon(tree.right)))


def _shape(canon) -> str:
    if isinstance(canon, int):
        return "."
    parts = sorted((_shape(p) for p in canon), key=len)
    return "(" + "".join(parts) + ")" if len(parts) == 2 else "?"


class TestExample6:
    """The worked cost-approximation example: intermediates 10/100/1000 with
    thresholds {10, 100} approximate the true 1110 as 120."""

    def test_plain_weights_charge_120_root_inclusive(self, g0):
        ld = left_deep_tree([0, 1, 2, 3])
        th = Thresholds((10.0, 100.0))
        assert approx_cost(g0, ld, th, "plain", include_root=True) == 120.0

    def test_incremental_weights_charge_110_root_inclusive(self, g0):
        ld = left_deep_tree([0, 1, 2, 3])
        th = Thresholds((10.0, 100.0))
        assert approx_cost(g0, ld, th, "incremental", include_root=True) == 110.0

    def test_argmin_identical_under_both_weightings(self, g0):
        tpl = fig_template()
        th = Thresholds((10.0, 100.0))
        trees = {}
        for mode in ("plain", "incremental"):
            model = encode(g0, tpl, th, weight_mode=mode)
            asg = solve_reference(model)
            assert asg.status == "optimal"
            trees[mode] = _canon(decode(g0, tpl, asg.values, model=model).tree)
        assert trees["plain"] == trees["incremental"]

    def test_objective_matches_nonroot_approximation(self, g0):
        tpl = fig_template()
        th = Thresholds((10.0, 100.0))
        model = encode(g0, tpl, th)
        asg = solve_reference(model)
        tree = decode(g0, tpl, asg.values, model=model).tree
        assert asg.objective == approx_cost(g0, tree, th, "incremental", include_root=False)


class TestDecode:
    def _left_deep_assignment(self, model):
        """Fig. 1(b): slots 0,1,2 active; A,B at slot 2, +C at 1, +D at 0."""
        values = {v.name: 0 for v in model.variables}
        for j in (0, 1, 2):
            values[f"ja_{j}"] = 1
        ops = {2: (0, 1), 1: (0, 1, 2), 0: (0, 1, 2, 3)}
        for j, rels in ops.items():
            for r in rels:
                values[f"roj_{r}_{j}"] = 1
        # tight predicate activation and threshold settings
        values.update({"pao_0_2": 1, "pao_0_1": 1, "pao_1_1": 1, "pao_0_0": 1, "pao_1_0": 1, "pao_2_0": 1})
        values.update({"trj_0_1": 1})
        return values

    def test_decode_left_deep(self, g0):
        tpl = fig_template()
        model = encode(g0, tpl, Thresholds((10.0, 100.0)))
        values = self._left_deep_assignment(model)
        partial = decode(g0, tpl, values, model=model)
        assert _canon(partial.tree) == _canon(left_deep_tree([0, 1, 2, 3]))

    def test_decode_balanced(self, g0):
        tpl = fig_template()
        model = encode(g0, tpl, Thresholds((10.0, 100.0)))
        values = {v.name: 0 for v in model.variables}
        for j in (0, 1, 3):
            values[f"ja_{j}"] = 1
        for r in (0, 1):
            values[f"roj_{r}_{1}"] = 1
        for r in (2, 3):
            values[f"roj_{r}_{3}"] = 1
        for r in range(4):
            values[f"roj_{r}_{0}"] = 1
        values.update({"pao_0_1": 1, "pao_2_3": 1, "pao_0_0": 1, "pao_1_0": 1, "pao_2_0": 1})
        values.update({"trj_0_3": 1, "trj_1_3": 1})
        partial = decode(g0, tpl, values, model=model)
        assert _canon(partial.tree) == frozenset(
            (frozenset((0, 1)), frozenset((2, 3)))
        )

    def test_conflicting_operands_rejected_family_f(self, g0):
        tpl = fig_template()
        model = encode(g0, tpl, Thresholds((10.0, 100.0)))
        values = {v.name: 0 for v in model.variables}
        for j in (0, 1, 3):
            values[f"ja_{j}"] = 1
        # relation A assigned to both siblings 1 and 3
        for r in (0, 1):
            values[f"roj_{r}_{1}"] = 1
        for r in (0, 2):
            values[f"roj_{r}_{3}"] = 1
        for r in range(4):
            values[f"roj_{r}_{0}"] = 1
        for t in range(2):
            for j in (1, 2, 3):
                values[f"trj_{t}_{j}"] = 1
        with pytest.raises(DecodeInfeasibleError) as err:
            decode(g0, tpl, values, model=model)
        assert err.value.family == "F"

    def test_missing_root_rejected_family_b(self, g0):
        tpl = fig_template()
        model = encode(g0, tpl, Thresholds((10.0, 100.0)))
        values = {v.name: 0 for v in model.variables}
        for j in (1, 2, 3):
            values[f"ja_{j}"] = 1
        with pytest.raises(DecodeInfeasibleError) as err:
            decode(g0, tpl, values, model=model)
        assert err.value.family in ("B", "C")

    def test_anchor_groups(self):
        g = tree_query(7, 2)
        tpl = build_template(2, "two_half_anchors", p_max=4)
        th = Thresholds((2.0**10,))
        model = encode(g, tpl, th)
        asg = solve_reference(model)
        assert asg.status == "optimal"
        partial = decode(g, tpl, asg.values, model=model)
        sizes = sorted(len(v) for v in partial.anchor_groups.values())
        covered = set()
        for grp in partial.anchor_groups.values():
            covered |= grp

        def leaves(node):
            if isinstance(node, Leaf):
                covered.add(node.rel)
            elif isinstance(node, AnchorLeaf):
                pass
            else:
                leaves(node.left)
                leaves(node.right)

        leaves(partial.tree)
        assert covered == set(range(7))
        for slot, grp in partial.anchor_groups.items():
            assert len(grp) == 2 + round(asg.values[f"nap_{slot}"])


class TestInvariants:
    def test_soundness_random_models(self):
        for seed in range(6):
            g = tree_query(5, seed)
            tpl = universal_template(4)
            th = derive_thresholds(plan_cost(g, left_deep_tree(range(5))) + 1, 3)
            model = encode(g, tpl, th)
            asg = solve_reference(model)
            assert asg.status == "optimal"
            partial = decode(g, tpl, asg.values, model=model)
            assert validate_tree(g, partial.tree) == []

    def test_predicate_activation_never_raises_objective(self, g0):
        tpl = fig_template()
        th = Thresholds((10.0, 100.0))
        model = encode(g0, tpl, th)
        asg = solve_reference(model)
        values = dict(asg.values)
        flipped = 0
        for p in range(3):
            for j in range(4):
                name = f"pao_{p}_{j}"
                pred = g0.predicates[p]
                if (
                    values[name] == 0
                    and values[f"roj_{pred.rel_a}_{j}"] == 1
                    and values[f"roj_{pred.rel_b}_{j}"] == 1
                ):
                    trial = dict(values)
                    trial[name] = 1
                    assert check_assignment(model, trial) is None
                    assert model.objective_value(trial) <= asg.objective + 1e-12
                    flipped += 1

    def test_scaling_thresholds_up_preserves_feasibility_and_scales_objective(self, g0):
        tpl = fig_template()
        th1 = Thresholds((10.0, 100.0))
        th2 = Thresholds((40.0, 400.0))
        m1 = encode(g0, tpl, th1)
        m2 = encode(g0, tpl, th2)
        asg = solve_reference(m1)
        # the same variable values stay feasible at scaled-up levels
        assert check_assignment(m2, asg.values) is None
        assert rel_close(
            m2.objective_value(asg.values), 4.0 * m1.objective_value(asg.values), 1e-12
        )

    def test_monotone_approximation_bound(self):
        # with a full power-of-two grid the non-root approximation sits in
        # [cost/2, cost] for plans whose per-join sizes stay >= 1
        for seed in range(8):
            g = tree_query(6, seed, card_range=(1.5, 4.0), sel_range=(-0.5, 0.0))
            tpl = universal_template(5)
            best = plan_cost(g, left_deep_tree(range(6)))
            th = power_of_two_thresholds(1.0, best * 4)
            for order_seed in range(3):
                tree = left_deep_tree(
                    [(i * (order_seed + 2)) % 6 for i in range(6)]
                    if len({(i * (order_seed + 2)) % 6 for i in range(6)}) == 6
                    else range(6)
                )
                cost = plan_cost(g, tree)
                approx = approx_cost(g, tree, th, "incremental", include_root=False)
                root_ic = intermediate_cardinality(g, range(6))
                full_cost = cost  # non-root joins only
                assert approx <= full_cost * (1 + 1e-12)
                assert approx >= full_cost / 2 * (1 - 1e-12)

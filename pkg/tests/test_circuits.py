import math

import numpy as np
import pytest

from putput import (
    AndNode,
    CircuitStructureError,
    InputNode,
    LogicCircuit,
    OrNode,
    ProbCircuit,
    ProductNode,
    ScopeError,
    SumNode,
    Workspace,
    pc_to_logic,
    simplify,
    to_formula,
    validate,
)
from oracles import enumerate_assignments, naive_prob, naive_satisfied
from synthdata import (
    SHOWCASE_FORMULA,
    SHOWCASE_NAMES,
    random_structured_pc,
    showcase_circuit,
)


def tiny_pc():
    # (0.3 x0 + 0.7 -x0) * x1
    nodes = (
        InputNode(0, True),
        InputNode(0, False),
        InputNode(1, True),
        SumNode((0, 1), (0.3, 0.7)),
        ProductNode((3, 2)),
    )
    return ProbCircuit(nodes, 4)


class TestConstruction:
    def test_root_out_of_range(self):
        with pytest.raises(CircuitStructureError):
            ProbCircuit((InputNode(0, True),), 3)

    def test_missing_child(self):
        with pytest.raises(CircuitStructureError):
            ProbCircuit((SumNode((5,), (1.0,)),), 0)

    def test_foreign_node_kind(self):
        with pytest.raises(CircuitStructureError):
            ProbCircuit((InputNode(0, True), AndNode((0,))), 1)
        with pytest.raises(CircuitStructureError):
            LogicCircuit((InputNode(0, True), SumNode((0,), (1.0,))), 1)

    def test_empty_circuit(self):
        pc = ProbCircuit.empty()
        assert pc.is_empty and pc.size == 0 and pc.num_vars == 0
        assert pc.log_probs(np.zeros((3, 2), dtype=bool)).tolist() == [-math.inf] * 3
        assert not pc.covered(np.zeros((2, 1), dtype=bool)).any()
        with pytest.raises(CircuitStructureError):
            ProbCircuit((InputNode(0, True),), -1)

    def test_immutable(self):
        pc = tiny_pc()
        with pytest.raises(AttributeError):
            pc.root = 0

    def test_cycle_detected(self):
        # ids are in range but the two sums point at each other
        nodes = (InputNode(0, True), SumNode((2,), (1.0,)), SumNode((1,), (1.0,)))
        pc = ProbCircuit(nodes, 1)
        with pytest.raises(CircuitStructureError):
            pc.topo_order

    def test_topo_order_children_first(self):
        for seed in range(10):
            pc = random_structured_pc(np.random.default_rng(seed), 6)
            seen = set()
            for i in pc.topo_order:
                node = pc.nodes[i]
                if not isinstance(node, InputNode):
                    assert all(c in seen for c in node.children)
                seen.add(i)
            assert sorted(pc.topo_order) == list(range(pc.size))


class TestEvaluation:
    def test_tiny_by_hand(self):
        pc = tiny_pc()
        assert pc.prob([True, True]) == pytest.approx(0.3)
        assert pc.prob([False, True]) == pytest.approx(0.7)
        assert pc.log_prob([True, False]) == -math.inf
        assert pc.log_prob([False, False]) == -math.inf

    def test_matches_naive_oracle(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            pc = random_structured_pc(rng, int(rng.integers(2, 8)))
            rows = enumerate_assignments(pc.num_vars)
            lp = pc.log_probs(rows)
            for row, got in zip(rows, lp):
                want = naive_prob(pc, row)
                if want == 0.0:
                    assert got == -math.inf
                else:
                    assert math.exp(got) == pytest.approx(want, rel=1e-9)

    def test_covered_equals_positive_probability(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            pc = random_structured_pc(rng, int(rng.integers(2, 8)))
            rows = enumerate_assignments(pc.num_vars)
            cov = pc.covered(rows)
            lp = pc.log_probs(rows)
            assert (cov == (lp > -math.inf)).all()

    def test_zero_weight_edge_is_absent(self):
        # sum with one live and one zeroed branch
        nodes = (
            InputNode(0, True),
            InputNode(0, False),
            SumNode((0, 1), (0.5, 0.0)),
        )
        pc = ProbCircuit(nodes, 2)
        assert pc.log_prob([False]) == -math.inf
        assert not pc.covered([[False]])[0]
        assert pc.prob([True]) == pytest.approx(0.5)

    def test_narrow_assignment_rejected(self):
        pc = tiny_pc()
        with pytest.raises(ScopeError):
            pc.log_probs(np.zeros((1, 1), dtype=bool))

    def test_extra_columns_ignored(self):
        pc = tiny_pc()
        wide = np.zeros((1, 5), dtype=bool)
        wide[0, 0] = wide[0, 1] = True
        assert pc.log_probs(wide)[0] == pytest.approx(math.log(0.3))


class TestSupportLemma:
    def test_positive_probability_iff_logic_satisfied(self):
        for seed in range(40):
            rng = np.random.default_rng(seed)
            pc = simplify(random_structured_pc(rng, int(rng.integers(2, 8))))
            lc = pc_to_logic(pc)
            for row in enumerate_assignments(max(pc.num_vars, 1)):
                assert (naive_prob(pc, row) > 0.0) == naive_satisfied(lc, row)

    def test_lemma_on_vectorized_paths(self):
        for seed in range(10):
            pc = simplify(random_structured_pc(np.random.default_rng(seed), 6))
            lc = pc_to_logic(pc)
            rows = enumerate_assignments(6)
            assert (pc.covered(rows) == lc.evaluate_many(rows)).all()


class TestValidate:
    def test_structured_circuits_are_clean(self):
        for seed in range(20):
            pc = random_structured_pc(np.random.default_rng(seed), 5)
            assert validate(pc) == []

    def test_smoothness_violation(self):
        nodes = (
            InputNode(0, True),
            InputNode(1, True),
            SumNode((0, 1), (0.5, 0.5)),
        )
        violations = validate(ProbCircuit(nodes, 2))
        assert [v.rule for v in violations] == ["smoothness"]
        assert violations[0].node == 2

    def test_decomposability_violation(self):
        nodes = (
            InputNode(0, True),
            InputNode(0, False),
            ProductNode((0, 1)),
        )
        assert [v.rule for v in validate(ProbCircuit(nodes, 2))] == ["decomposability"]

    def test_negative_weight_and_arity(self):
        nodes = (
            InputNode(0, True),
            InputNode(0, False),
            SumNode((0, 1), (0.5, -0.1)),
            SumNode((0, 1), (0.5,)),
        )
        pc = ProbCircuit(nodes, 2)
        rules = {v.rule for v in validate(pc)}
        assert "weight-sign" in rules
        pc2 = ProbCircuit(nodes, 3)
        assert "weight-arity" in {v.rule for v in validate(pc2)}

    def test_cycle_reported_not_raised(self):
        nodes = (InputNode(0, True), SumNode((2,), (1.0,)), SumNode((1,), (1.0,)))
        out = validate(ProbCircuit(nodes, 1))
        assert [v.rule for v in out] == ["dag"]

    def test_logic_circuit_checked_for_shape_only(self):
        nodes = (InputNode(0, True), InputNode(1, True), OrNode((0, 1)))
        assert validate(LogicCircuit(nodes, 2)) == []


class TestWorkspace:
    def test_requires_topo_ordered_ids(self):
        # parent stored before child
        nodes = (SumNode((1,), (1.0,)), InputNode(0, True))
        pc = ProbCircuit(nodes, 0)
        with pytest.raises(CircuitStructureError):
            Workspace.from_circuit(pc)

    def test_remove_edge_and_cleanup_kills_product_chain(self):
        pc = tiny_pc()
        ws = Workspace.from_circuit(pc)
        # strip both children of the sum: the sum dies, the product dies,
        # the root is dead, the workspace empties
        ws.remove_edge(3, 1)
        ws.remove_edge(3, 0)
        ws.cleanup()
        assert ws.is_empty
        assert ws.compact().is_empty

    def test_cleanup_drops_unreachable(self):
        pc = tiny_pc()
        ws = Workspace.from_circuit(pc)
        ws.remove_edge(3, 1)  # -x0 branch
        ws.cleanup()
        assert 1 not in ws.kind
        out = ws.compact()
        assert out.size == 4
        assert out.prob([True, True]) == pytest.approx(0.3)
        assert out.prob([False, True]) == 0.0

    def test_covered_matches_circuit(self):
        for seed in range(10):
            pc = random_structured_pc(np.random.default_rng(seed), 6)
            ws = Workspace.from_circuit(pc)
            rows = np.array(enumerate_assignments(6))
            assert (ws.covered(rows) == pc.covered(rows)).all()

    def test_compact_renumbers_dense(self):
        pc = tiny_pc()
        ws = Workspace.from_circuit(pc)
        ws.remove_edge(3, 0)
        ws.cleanup()
        out = ws.compact()
        assert sorted(range(out.size)) == list(range(out.size))
        assert validate(out) == []
        assert out.prob([False, True]) == pytest.approx(0.7)

    def test_copy_is_independent(self):
        ws = Workspace.from_circuit(tiny_pc())
        other = ws.copy()
        other.remove_edge(3, 0)
        assert len(ws.children[3]) == 2
        assert len(other.children[3]) == 1


class TestSimplify:
    def test_removes_zero_weight_edges(self):
        nodes = (
            InputNode(0, True),
            InputNode(0, False),
            SumNode((0, 1), (0.5, 0.0)),
        )
        out = simplify(ProbCircuit(nodes, 2))
        assert out.size == 2
        assert out.prob([True]) == pytest.approx(0.5)

    def test_preserves_probability(self):
        for seed in range(15):
            pc = random_structured_pc(np.random.default_rng(seed), 5)
            out = simplify(pc)
            rows = enumerate_assignments(5)
            np.testing.assert_allclose(
                np.exp(pc.log_probs(rows)), np.exp(out.log_probs(rows)), atol=1e-12
            )

    def test_all_zero_collapses_to_empty(self):
        nodes = (InputNode(0, True), SumNode((0,), (0.0,)))
        assert simplify(ProbCircuit(nodes, 1)).is_empty


class TestShowcase:
    """Golden three-variable fixture: structure, formula, and likelihoods are
    frozen so regressions anywhere in the stack show up here."""

    def test_validates_clean(self):
        assert validate(showcase_circuit()) == []

    def test_formula_rendering_frozen(self):
        lc = pc_to_logic(showcase_circuit())
        assert to_formula(lc, names=SHOWCASE_NAMES) == SHOWCASE_FORMULA

    def test_likelihoods_frozen(self):
        pc = showcase_circuit()
        rows = enumerate_assignments(3)
        got = np.exp(pc.log_probs(rows))
        want = [0.465, 0.505, 0.0, 0.0, 0.0105, 0.0105, 0.0045, 0.0045]
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_support_is_a_or_not_b(self):
        pc = showcase_circuit()
        for row in enumerate_assignments(3):
            a, b, _ = row
            assert pc.covered([row])[0] == (a or not b)


def test_formula_empty_circuit():
    assert to_formula(LogicCircuit.empty()) == "false"


def test_formula_single_child_unwrapped():
    nodes = (InputNode(0, True), SumNode((0,), (1.0,)))
    assert to_formula(ProbCircuit(nodes, 1)) == "x0"

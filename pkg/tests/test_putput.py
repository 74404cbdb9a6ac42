import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from putput import (
    Database,
    ElbowNotFoundError,
    InputNode,
    MixtureConfig,
    PipelineConfig,
    PipelineError,
    ProbCircuit,
    ProductNode,
    PutputError,
    PutputQuery,
    Schema,
    SumNode,
    Variable,
    boolean_schema,
    compute_target,
    compute_target_log,
    dumps_pc,
    elbow_threshold,
    f1_masks,
    learn_mixture,
    prune_input_nodes,
    prune_threshold,
    read_cnf,
    read_lc,
    read_pc,
    run_pipeline,
    save_result,
    step1_search,
)
from oracles import enumerate_assignments
from synthdata import planted_concept, profile_circuit, showcase_circuit


def music_db():
    s = Schema(
        (
            Variable("genre", ("metal", "rock", "pop")),
            Variable("mood", ("dark", "bright")),
            Variable("tempo", ("slow", "fast")),
        )
    )
    rows = (
        ("metal", "dark", "slow"),
        ("metal", "dark", "fast"),
        ("rock", "dark", "slow"),
        ("pop", "bright", "fast"),
        ("pop", "bright", "slow"),
        ("rock", "bright", "fast"),
    )
    return Database(s, rows)


def bool_db(n):
    schema = boolean_schema([f"x{i}" for i in range(n)])
    rows = tuple(
        tuple("true" if b else "false" for b in bits)
        for bits in itertools.product([False, True], repeat=n)
    )
    return Database(schema, rows)


class TestElbow:
    """Profiles are planted through a single-variable circuit so every row's
    likelihood is chosen exactly; gentle two-then-one tails sit within the
    stencil windows above each cliff."""

    def single_cliff_profile(self):
        values = [1e-4] * 400 + [1.06e-4, 1.06e-4, 1.15e-4] + [1e-3] * 50
        return profile_circuit(values)

    def test_single_cliff_fires_at_crowd(self):
        pc, db = self.single_cliff_profile()
        res = elbow_threshold(pc, db, epsilon=1e-5)
        assert res.cliff == pytest.approx(1e-4, rel=1e-9)
        assert 1e-4 < res.threshold < 1.06e-4
        assert res.threshold == pytest.approx(1.03e-4, rel=1e-6)
        assert not res.log_space

    def test_threshold_separates_exactly(self):
        pc, db = self.single_cliff_profile()
        res = elbow_threshold(pc, db, epsilon=1e-5)
        target = compute_target(pc, db, res.threshold)
        assert target == frozenset(range(400, 453))

    def test_profile_counts(self):
        pc, db = self.single_cliff_profile()
        res = elbow_threshold(pc, db, epsilon=1e-5)
        counts = {round(v, 12): c for v, c in res.profile}
        assert counts[round(1e-4, 12)] == 53
        assert counts[round(1e-3, 12)] == 0
        assert len(res.profile) == 4

    def test_two_cliffs_picks_the_higher(self):
        values = (
            [3e-5] * 40
            + [3.6e-5, 3.6e-5, 4.5e-5]
            + [1e-4] * 400
            + [1.06e-4, 1.06e-4, 1.15e-4]
            + [1e-3] * 50
        )
        pc, db = profile_circuit(values)
        res = elbow_threshold(pc, db, epsilon=1e-5)
        assert res.cliff == pytest.approx(1e-4, rel=1e-9)
        target = compute_target(pc, db, res.threshold)
        assert target == frozenset(range(443, 496))

    def test_uniform_profile_has_no_elbow(self):
        pc, db = profile_circuit([5e-4] * 100)
        with pytest.raises(ElbowNotFoundError) as ei:
            elbow_threshold(pc, db, epsilon=1e-5)
        profile = ei.value.profile
        assert len(profile) == 1
        assert profile[0][1] == 0

    def test_isolated_cliff_is_rejected(self):
        # without in-window tails the drop above the crowd is exactly zero,
        # which disqualifies the candidate rather than dividing by it
        pc, db = profile_circuit([1e-4] * 400 + [1e-3] * 50)
        with pytest.raises(ElbowNotFoundError):
            elbow_threshold(pc, db, epsilon=1e-5)

    def test_log_space_ladder(self):
        logs = [-10.0] * 300 + [-9.97, -9.97, -9.925] + [-8.0] * 30
        pc, db = profile_circuit([math.exp(v) for v in logs])
        res = elbow_threshold(pc, db, epsilon=0.05, log_space=True)
        assert res.log_space
        assert res.cliff == pytest.approx(-10.0, abs=1e-9)
        assert res.log_threshold == pytest.approx(-9.985, abs=1e-9)
        target = compute_target_log(pc, db, res.log_threshold)
        assert target == frozenset(range(300, 333))

    def test_epsilon_must_be_positive(self):
        pc, db = profile_circuit([0.1, 0.9])
        with pytest.raises(PutputError):
            elbow_threshold(pc, db, epsilon=0.0)

    def test_empty_database_rejected(self):
        pc, db = profile_circuit([0.5])
        empty = Database(db.schema, ())
        with pytest.raises(PutputError):
            elbow_threshold(pc, empty, epsilon=1e-5)


def two_branch_pc():
    """0.7 of the mass on the all-true product, 0.3 on the all-false one."""
    nodes = tuple(
        [InputNode(i, True) for i in range(4)]
        + [InputNode(i, False) for i in range(4)]
        + [ProductNode((0, 1, 2, 3)), ProductNode((4, 5, 6, 7))]
        + [SumNode((8, 9), (0.7, 0.3))]
    )
    return ProbCircuit(nodes, 10)


class TestStep1Search:
    def test_whole_database_target_is_free(self):
        db = music_db()
        pc = learn_mixture(db, range(len(db)), MixtureConfig(seed=0, k=2, em_iters=5))
        circuit, params, report = step1_search(pc, db, range(len(db)), "threshold")
        assert report.f1 == 1.0
        assert params.method == "threshold"

    @pytest.mark.parametrize("method", ["threshold", "topdown", "flows"])
    def test_disjoint_branches_all_methods_isolate_target(self, method):
        pc = two_branch_pc()
        db = bool_db(4)
        target = [15]  # the all-true row
        circuit, params, report = step1_search(pc, db, target, method)
        assert report.f1 == 1.0
        cov = circuit.covered(db.matrix)
        assert cov.tolist() == [False] * 15 + [True]
        assert params.method == method

    def test_threshold_parameter_lands_between_weights(self):
        pc = two_branch_pc()
        db = bool_db(4)
        _, params, report = step1_search(pc, db, [15], "threshold")
        assert report.f1 == 1.0
        assert 0.3 < params.alpha <= 0.7

    def test_report_matches_returned_circuit(self):
        pc = two_branch_pc()
        db = bool_db(4)
        circuit, _, report = step1_search(pc, db, [0, 15], "topdown")
        cov = circuit.covered(db.matrix)
        tp = int(cov[[0, 15]].sum())
        fp = int(cov.sum()) - tp
        assert report.tp == tp and report.fp == fp

    def test_threads_do_not_change_the_result(self):
        pc = two_branch_pc()
        db = bool_db(4)
        baseline = None
        for threads in (1, 4):
            circuit, params, report = step1_search(pc, db, [15], "flows", threads=threads)
            key = (dumps_pc(circuit), params, report)
            if baseline is None:
                baseline = key
            else:
                assert key == baseline

    def test_empty_target_rejected(self):
        with pytest.raises(PutputError):
            step1_search(two_branch_pc(), bool_db(4), [], "flows")

    def test_out_of_range_target_rejected(self):
        with pytest.raises(PutputError):
            step1_search(two_branch_pc(), bool_db(4), [99], "flows")

    def test_unknown_method_rejected(self):
        with pytest.raises(PutputError):
            step1_search(two_branch_pc(), bool_db(4), [0], "magic")


class TestStep2:
    def test_showcase_reduces_to_conjunction(self):
        pc = prune_threshold(showcase_circuit(), 0.1)
        db = bool_db(3)
        target = [0, 1]  # the -A -B rows
        out, stats = prune_input_nodes(pc, db, target)
        assert stats.lb == 1.0
        cov = out.covered(db.matrix)
        want = [not a and not b for a, b, _ in enumerate_assignments(3)]
        assert cov.tolist() == want
        assert out.size < pc.size
        assert stats.size_before == pc.size and stats.size_after == out.size

    def test_idempotent(self):
        pc = prune_threshold(showcase_circuit(), 0.1)
        db = bool_db(3)
        once, _ = prune_input_nodes(pc, db, [0, 1])
        twice, stats = prune_input_nodes(once, db, [0, 1])
        assert twice == once
        assert stats.edges_removed == 0

    def test_load_bearing_inputs_survive(self):
        nodes = (InputNode(0, True), InputNode(1, True), ProductNode((0, 1)))
        pc = ProbCircuit(nodes, 2)
        db = bool_db(2)
        out, stats = prune_input_nodes(pc, db, [3])
        assert out == pc
        assert stats.edges_removed == 0
        assert stats.sweeps == 1
        assert stats.lb == 1.0

    def test_neutral_removal_needs_non_strict(self):
        # two copies of the same literal under one sum: dropping either leaves
        # both the support and the theory untouched, so only the strict flag
        # decides
        nodes = (
            InputNode(0, True),
            InputNode(1, True),
            InputNode(1, True),
            SumNode((1, 2), (0.5, 0.5)),
            ProductNode((0, 3)),
        )
        pc = ProbCircuit(nodes, 4)
        schema = boolean_schema(["x0", "x1"])
        db = Database(schema, (("true", "true"), ("false", "true")))
        relaxed, stats_relaxed = prune_input_nodes(pc, db, [0], strict=False)
        assert relaxed.size == 4
        assert stats_relaxed.edges_removed == 1
        strictly, stats_strict = prune_input_nodes(pc, db, [0], strict=True)
        assert strictly == pc
        assert stats_strict.edges_removed == 0

    def test_tie_that_complicates_the_theory_is_rejected(self):
        # dropping the -x1 branch would not change coverage of these two rows,
        # but it narrows the support from x0 to x0 AND x1, one clause to two;
        # ties may not make the theory harder to read
        nodes = (
            InputNode(0, True),
            InputNode(1, True),
            InputNode(1, False),
            SumNode((1, 2), (0.5, 0.5)),
            ProductNode((0, 3)),
        )
        pc = ProbCircuit(nodes, 4)
        schema = boolean_schema(["x0", "x1"])
        db = Database(schema, (("true", "true"), ("false", "true")))
        out, stats = prune_input_nodes(pc, db, [0], strict=False)
        assert out == pc
        assert stats.edges_removed == 0

    def test_f1_never_drops_below_floor(self):
        db, truth, positives, _ = planted_concept(12, n_vars=6, n_rows=120, n_truth=30, n_pos=15)
        pc = learn_mixture(db, positives, MixtureConfig(seed=0, k=3, em_iters=10))
        step1, _, _ = step1_search(pc, db, sorted(truth), "flows")
        out, stats = prune_input_nodes(step1, db, sorted(truth))
        mask = np.zeros(len(db), dtype=bool)
        mask[list(truth)] = True
        assert f1_masks(out.covered(db.matrix), mask) >= stats.lb

    def test_empty_circuit_passthrough(self):
        db = bool_db(2)
        out, stats = prune_input_nodes(ProbCircuit.empty(), db, [])
        assert out.is_empty
        assert stats.size_after == 0


class TestPipeline:
    def config(self, **kw):
        base = dict(seed=5, k=2, em_iters=8, method="flows", threshold=0.0)
        base.update(kw)
        return PipelineConfig(**base)

    def test_trivial_threshold_covers_everything(self):
        db = music_db()
        result = run_pipeline(db, [0, 1, 5], self.config())
        assert result.threshold_source == "explicit"
        assert result.target == tuple(range(len(db)))
        assert result.step2_report.f1 == 1.0
        assert result.query
        assert result.cnf.covers(db).all()

    def test_report_text_layout(self):
        db = music_db()
        result = run_pipeline(db, [0, 1, 5], self.config())
        text = result.to_report_text()
        lines = text.splitlines()
        assert lines[0] == "putput report v1"
        keys = [l.split(":")[0] for l in lines[1:]]
        assert keys == [
            "method",
            "seed",
            "k",
            "em_iters",
            "smooth",
            "epsilon",
            "log_space",
            "strict_guard",
            "threshold_source",
            "threshold",
            "log_threshold",
            "target_size",
            "size_learned",
            "size_step1",
            "size_final",
            "prune",
            "lb",
            "step1_tp",
            "step1_fp",
            "step1_fn",
            "step1_tn",
            "step1_precision",
            "step1_recall",
            "step1_f1",
            "step2_tp",
            "step2_fp",
            "step2_fn",
            "step2_tn",
            "step2_precision",
            "step2_recall",
            "step2_f1",
            "sweeps",
            "edges_removed",
            "clauses_before",
            "clauses",
            "incomprehensibility_before",
            "incomprehensibility_after",
            "query",
        ]

    def test_internal_consistency(self):
        db, truth, positives, _ = planted_concept(3, n_vars=6, n_rows=120, n_truth=30, n_pos=15)
        pc = learn_mixture(db, positives, PipelineConfig(seed=2, k=3, em_iters=10).mixture_config())
        lp = pc.log_probs(db.matrix)
        threshold = float(np.exp(np.quantile(lp, 0.7)))
        config = PipelineConfig(seed=2, k=3, em_iters=10, method="flows", threshold=threshold)
        result = run_pipeline(db, positives, config)
        covered = result.final_circuit.covered(db.matrix)
        # support lemma chained with extraction: circuit, logic, and theory
        # must select the same rows
        assert (result.final_logic.evaluate_many(db.matrix) == covered).all()
        assert (result.cnf.covers_bits(db.matrix) == covered).all()
        assert (result.cnf.covers(db) == covered).all()
        assert result.step2_report.f1 >= result.lb
        assert result.final_circuit.size <= result.step1_circuit.size
        assert result.incomp_after <= result.incomp_before + 1e-12

    def test_deterministic_end_to_end(self):
        db, _, positives, _ = planted_concept(4, n_vars=6, n_rows=120, n_truth=30, n_pos=15)
        config = PipelineConfig(seed=9, k=3, em_iters=10, method="topdown", threshold=1e-9)
        a = run_pipeline(db, positives, config)
        b = run_pipeline(db, positives, config)
        assert a.to_report_text() == b.to_report_text()
        assert dumps_pc(a.final_circuit) == dumps_pc(b.final_circuit)

    def test_stage_error_learn(self):
        db = music_db()
        with pytest.raises(PipelineError) as ei:
            run_pipeline(db, [], self.config())
        assert str(ei.value).startswith("stage 'learn'")

    def test_stage_error_empty_target(self):
        db = music_db()
        with pytest.raises(PipelineError) as ei:
            run_pipeline(db, [0, 1], self.config(threshold=10.0))
        assert str(ei.value).startswith("stage 'target'")

    def test_save_result_round_trips(self, tmp_path):
        db = music_db()
        result = run_pipeline(db, [0, 1, 5], self.config())
        out = tmp_path / "run"
        save_result(result, out)
        names = sorted(p.name for p in out.iterdir())
        assert names == [
            "final.lc",
            "final.pc",
            "report.txt",
            "schema.txt",
            "step1.pc",
            "theory.cnf",
        ]
        assert read_pc(out / "final.pc") == result.final_circuit
        assert read_pc(out / "step1.pc") == result.step1_circuit
        assert read_lc(out / "final.lc") == result.final_logic
        assert read_cnf(out / "theory.cnf") == result.cnf
        assert (out / "report.txt").read_text() == result.to_report_text()

    def test_fallback_when_no_elbow(self):
        # two positives, flat tiny mixture: the likelihood profile of six rows
        # has no cliff, so the pipeline covers the whole database instead
        db = music_db()
        config = PipelineConfig(seed=0, k=1, em_iters=3, method="flows")
        result = run_pipeline(db, [0, 1], config)
        assert result.threshold_source == "fallback-min"
        assert result.target == tuple(range(len(db)))


class TestPutputQuery:
    def test_fit_predict_score(self):
        db = music_db()
        X = db.matrix
        y = np.zeros(len(db), dtype=int)
        y[[0, 1, 5]] = 1
        est = PutputQuery(k=2, em_iters=8, seed=5, threshold=0.0, schema=db.schema)
        est.fit(X, y)
        assert isinstance(est.query_, str) and est.query_
        pred = est.predict(X)
        assert set(pred.tolist()) <= {0, 1}
        assert pred.tolist() == est.cnf_.covers(db).astype(int).tolist()
        assert 0.0 <= est.score(X, y) <= 1.0

    def test_duplicate_rows_collapse(self):
        db = music_db()
        X = np.vstack([db.matrix, db.matrix[:2]])
        y = np.zeros(len(X), dtype=int)
        y[len(db)] = 1  # only the duplicate occurrence is marked positive
        est = PutputQuery(k=1, em_iters=3, seed=0, threshold=0.0, schema=db.schema)
        est.fit(X, y)
        assert est.result_.target == tuple(range(len(db)))

    def test_mismatched_y_rejected(self):
        db = music_db()
        est = PutputQuery(schema=db.schema)
        with pytest.raises(PutputError):
            est.fit(db.matrix, [1, 0])

    def test_no_positives_rejected(self):
        db = music_db()
        est = PutputQuery(schema=db.schema)
        with pytest.raises(PutputError):
            est.fit(db.matrix, np.zeros(len(db)))

    def test_sklearn_clone(self):
        est = PutputQuery(k=3, em_iters=9, method="topdown", seed=1)
        assert clone(est).get_params() == est.get_params()

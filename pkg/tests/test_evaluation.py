import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxtail.evaluation import (
    EvaluationError,
    export_report,
    format_improvement,
    improvement_pct,
    rank_variables,
    read_report_table,
    select_quantile,
    sweep,
    VariableRanking,
)
from ctxtail.metrics import MetricError, f1_score, fold_hash, kfold_split, roc_auc
from ctxtail.models import ModelSpec, build_features
from ctxtail.registry import build_registry, annotate_corpus
from ctxtail import synthgen

from conftest import make_corpus, make_dialogue


# --- brute-force oracles ---

def f1_reference(y_true, y_pred):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 1)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t == 0 and p == 1)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 0)
    prec = tp / (tp + fp) if tp + fp else None
    rec = tp / (tp + fn) if tp + fn else None
    if not prec and not rec:
        return 0.0
    if prec is None or rec is None or prec + rec == 0:
        return 0.0
    return 2 * prec * rec / (prec + rec)


def auc_reference(y_true, scores):
    pos = [s for t, s in zip(y_true, scores) if t == 1]
    neg = [s for t, s in zip(y_true, scores) if t == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else (0.5 if sp == sn else 0.0)
    return total / (len(pos) * len(neg))


class TestF1:
    def test_perfect(self):
        assert f1_score([0, 1, 1], [0, 1, 1]) == 1.0

    def test_formula_forced(self):
        # TP=2, FP=1, FN=1
        y_true = [1, 1, 0, 1, 0]
        y_pred = [1, 1, 1, 0, 0]
        assert f1_score(y_true, y_pred) == pytest.approx(2 / 3)

    def test_all_negative_zero(self):
        assert f1_score([0, 0, 0], [0, 0, 0]) == 0.0

    def test_matches_confusion_matrix_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 200))
            y = rng.integers(0, 2, n)
            p = rng.integers(0, 2, n)
            assert f1_score(y, p) == pytest.approx(f1_reference(y.tolist(), p.tolist()), abs=1e-12)


class TestRocAuc:
    def test_perfectly_ordered(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_equal_scores_half(self):
        assert roc_auc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == 0.5

    def test_single_class_errors(self):
        with pytest.raises(MetricError):
            roc_auc([1, 1], [0.1, 0.2])

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 120))
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            s = np.round(rng.random(n), 2)  # coarse scores force ties
            assert roc_auc(y, s) == pytest.approx(auc_reference(y.tolist(), s.tolist()), abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 2, 100)
        y[0], y[1] = 0, 1
        s = rng.random(100)
        a1 = roc_auc(y, s)
        a2 = roc_auc(y, np.exp(3 * s) + 7)
        assert a1 == pytest.approx(a2, abs=1e-12)


class TestKfold:
    def test_even_split(self):
        folds = kfold_split(np.zeros(100, dtype=int), k=10, seed=0)
        assert all(len(f) == 10 for f in folds)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 9999), st.integers(2, 12), st.integers(12, 300))
    def test_partition_laws(self, seed, k, n):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, n)
        folds = kfold_split(y, k=k, seed=seed)
        flat = np.concatenate(folds)
        assert len(flat) == n
        assert len(np.unique(flat)) == n  # disjoint + covering
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
        n_pos = int(y.sum())
        pos_counts = [int(y[f].sum()) for f in folds]
        assert max(pos_counts) - min(pos_counts) <= 1

    def test_stratification_rate_within_one_sample(self):
        rng = np.random.default_rng(3)
        for seed in range(100):
            n = int(rng.integers(30, 200))
            y = (rng.random(n) < 0.3).astype(int)
            k = 5
            folds = kfold_split(y, k=k, seed=seed)
            global_rate = y.mean()
            for f in folds:
                # within +/- 1 sample of the global rate
                assert abs(y[f].sum() - global_rate * len(f)) <= 1.0 + 1e-9

    def test_n_below_k_errors(self):
        with pytest.raises(MetricError):
            kfold_split(np.zeros(5, dtype=int), k=10, seed=0)

    def test_hash_depends_on_assignment(self):
        y = np.arange(100) % 2
        h1 = fold_hash(kfold_split(y, k=5, seed=1))
        h2 = fold_hash(kfold_split(y, k=5, seed=2))
        assert h1 != h2


def ranking_fixture():
    # product A offered everywhere; var0 frequent/weak, var1 rare/strong
    dialogues = [
        make_dialogue("d0", "c0", ["common phrase here"], [("A", 1)]),
        make_dialogue("d1", "c1", ["common phrase again"], [("A", 0)]),
        make_dialogue("d2", "c2", ["common phrase more"], [("A", 0)]),
        make_dialogue("d3", "c3", ["common phrase yes", "rare signal"], [("A", 1)]),
        make_dialogue("d4", "c4", ["rare signal"], [("A", 1)]),
        make_dialogue("d5", "c5", ["plain words"], [("A", 0)]),
    ]
    corpus = make_corpus(dialogues)
    reg = build_registry(
        {
            1: {"phrases": ["common phrase"]},
            2: {"phrases": ["rare signal"]},
            3: {"phrases": ["absent entirely"]},
        }
    )
    ann = annotate_corpus(corpus, reg)
    return corpus, reg, ann


class TestRankVariables:
    def test_frequency_and_rate(self):
        corpus, reg, ann = ranking_fixture()
        freq = rank_variables(corpus, reg, ann, "A", "propensity_frequency", rate_min_support=1)
        scores = dict(freq.entries)
        assert scores["ctx00001"] == 2.0  # d0, d3
        assert scores["ctx00002"] == 2.0  # d3, d4
        assert scores["ctx00003"] == 0.0
        rate = rank_variables(corpus, reg, ann, "A", "propensity_rate", rate_min_support=1)
        rate_scores = dict(rate.entries)
        assert rate_scores["ctx00001"] == pytest.approx(0.5)
        assert rate_scores["ctx00002"] == pytest.approx(1.0)
        assert "ctx00003" not in rate_scores  # never co-occurs: excluded

    def test_direct_example_counts(self):
        # variable present in 4 offer dialogues with outcomes 1,0,0,1
        dialogues = [
            make_dialogue(f"d{i}", f"c{i}", ["the marker phrase"], [("A", o)])
            for i, o in enumerate([1, 0, 0, 1])
        ]
        corpus = make_corpus(dialogues)
        reg = build_registry({1: {"phrases": ["marker phrase"]}})
        ann = annotate_corpus(corpus, reg)
        freq = rank_variables(corpus, reg, ann, "A", "propensity_frequency")
        assert freq.entries[0][1] == 2.0
        rate = rank_variables(corpus, reg, ann, "A", "propensity_rate", rate_min_support=1)
        assert rate.entries[0][1] == pytest.approx(0.5)

    def test_scores_non_increasing_and_order_invariant(self):
        corpus, reg, ann = ranking_fixture()
        r = rank_variables(corpus, reg, ann, "A", "propensity_frequency")
        scores = [s for _, s in r.entries]
        assert scores == sorted(scores, reverse=True)
        # dialogue order must not matter
        perm = np.random.default_rng(0).permutation(len(corpus.dialogues))
        corpus2 = type(corpus)(
            dialogues=tuple(corpus.dialogues[i] for i in perm), product_catalog=corpus.product_catalog
        )
        ann2 = annotate_corpus(corpus2, reg)
        r2 = rank_variables(corpus2, reg, ann2, "A", "propensity_frequency")
        assert r.entries == r2.entries

    def test_rate_min_support_pushes_unstable_below(self):
        corpus, reg, ann = ranking_fixture()
        rate = rank_variables(corpus, reg, ann, "A", "propensity_rate", rate_min_support=3)
        # ctx00002 has perfect rate but only 2 co-occurrences -> ranked below ctx00001
        assert [v for v, _ in rate.entries] == ["ctx00001", "ctx00002"]

    def test_frequency_scores_decay_like_power_law(self):
        # qualitative long-tail shape on generated data: sorted frequency
        # scores fit a straight line in log-log rank space
        cfg = synthgen.SynthConfig(seed=29, n_dialogues=12_000, n_variables=60,
                                   zipf_exponent=1.1, mean_active_vars=2.5,
                                   filler_vocab_size=250, min_customer_lines=2,
                                   max_customer_lines=3)
        corpus, _, truth = synthgen.generate(cfg)
        reg = synthgen.truth_registry(truth)
        ann = annotate_corpus(corpus, reg)
        r = rank_variables(corpus, reg, ann, "account", "propensity_frequency")
        scores = np.array([s for _, s in r.entries])
        scores = scores[scores > 0]
        x = np.log(np.arange(1, len(scores) + 1))
        y = np.log(scores)
        slope, intercept = np.polyfit(x, y, 1)
        r2 = 1 - np.var(y - (slope * x + intercept)) / np.var(y)
        assert slope < -0.5
        assert r2 > 0.8  # qualitative: outcome noise scatters the pure activation law
        assert all(float(s).is_integer() for _, s in r.entries)  # frequency is a count

    def test_matches_brute_force_recount(self):
        cfg = synthgen.SynthConfig(seed=11, n_dialogues=400, n_variables=15,
                                   mean_active_vars=1.5, filler_vocab_size=120)
        corpus, _, truth = synthgen.generate(cfg)
        reg = synthgen.truth_registry(truth)
        ann = annotate_corpus(corpus, reg)
        r = rank_variables(corpus, reg, ann, "salary", "propensity_frequency")
        scores = dict(r.entries)
        for vi, var in enumerate(reg.variables):
            count = 0
            for d in corpus.dialogues:
                offer = next((o for o in d.offers if o.product_id == "salary"), None)
                if offer is None or offer.outcome != 1:
                    continue
                row = ann.matrix[list(ann.dialogue_ids).index(d.dialogue_id)]
                count += int(row[vi])
            assert scores[var.variable_id] == count


class TestSelectQuantile:
    def test_floor_rule(self):
        ranking = VariableRanking("A", "propensity_frequency", [(f"v{i}", 216.0 - i) for i in range(216)])
        assert len(select_quantile(ranking, 100)) == 216
        assert select_quantile(ranking, 0) == []
        assert len(select_quantile(ranking, 10)) == 21  # floor(21.6)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 100), st.integers(0, 100), st.integers(1, 300))
    def test_monotone_subsets(self, q1, q2, n):
        ranking = VariableRanking("A", "propensity_frequency", [(f"v{i}", float(n - i)) for i in range(n)])
        lo, hi = sorted([q1, q2])
        assert set(select_quantile(ranking, lo)) <= set(select_quantile(ranking, hi))

    def test_out_of_range(self):
        ranking = VariableRanking("A", "propensity_frequency", [])
        with pytest.raises(EvaluationError):
            select_quantile(ranking, 101)


class TestImprovement:
    def test_published_auc_arithmetic(self):
        assert improvement_pct(0.78, 0.832) == pytest.approx(6.667, abs=2e-2)
        assert format_improvement(0.78, 0.832) == "+6.67%"

    def test_published_f1_arithmetic(self):
        pct = improvement_pct(0.535, 0.714)
        assert pct == pytest.approx(33.5, abs=0.05)
        assert format_improvement(0.535, 0.714) == "+33.5%"

    def test_three_significant_figures(self):
        assert format_improvement(0.535, 0.557) == "+4.11%"
        assert format_improvement(0.757, 0.762) == "+0.661%"

    def test_zero_baseline(self):
        with pytest.raises(EvaluationError):
            improvement_pct(0.0, 0.5)


def small_sweep_inputs(seed=0):
    cfg = synthgen.SynthConfig(
        seed=seed, n_dialogues=900, n_variables=12, mean_active_vars=1.2,
        effect_head=1.2, effect_tail=2.4, filler_vocab_size=100, embed_dim=6,
    )
    corpus, emb, truth = synthgen.generate(cfg)
    reg = synthgen.truth_registry(truth)
    ann = annotate_corpus(corpus, reg)
    table = build_features(corpus, "account", emb, ann)
    ranking = rank_variables(corpus, reg, ann, "account", "propensity_frequency")
    return table, reg, ranking


class TestSweep:
    def test_report_structure_and_improvements(self):
        table, reg, ranking = small_sweep_inputs()
        rep = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 80}),
                    q_list=(0, 50, 100), k=4, seed=1)
        assert [r.q for r in rep.rows] == [0.0, 50.0, 100.0]
        base = rep.rows[0]
        assert base.f1_impr_pct == pytest.approx(0.0)
        for r in rep.rows:
            assert r.n_folds_ok == 4
            if r.q == 100.0:
                assert r.auc_impr_pct == pytest.approx(
                    (r.auc_mean - base.auc_mean) / base.auc_mean * 100
                )
        assert rep.rows[-1].auc_mean > base.auc_mean  # context carries signal

    def test_folds_shared_across_q(self):
        table, reg, ranking = small_sweep_inputs(1)
        rep1 = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 50}),
                     q_list=(0, 100), k=4, seed=7)
        rep2 = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 50}),
                     q_list=(0, 30, 100), k=4, seed=7)
        assert rep1.fold_assignment_hash == rep2.fold_assignment_hash
        assert rep1.row_for(100.0).auc_mean == pytest.approx(rep2.row_for(100.0).auc_mean)

    def test_auto_model_routes_through_selection(self):
        table, reg, ranking = small_sweep_inputs(2)
        rep = sweep(table, reg, ranking, ModelSpec("auto"), q_list=(0, 100), k=3, seed=0,
                    auto_candidates=[ModelSpec("logreg", {"max_iter": 60})], auto_cv_folds=2)
        assert rep.model_label == "auto"
        assert all(r.n_folds_ok == 3 for r in rep.rows)

    def test_tuned_threshold_mode(self):
        table, reg, ranking = small_sweep_inputs(6)
        rep = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 60}),
                    q_list=(0, 100), k=3, seed=1, threshold="tune")
        assert all(r.n_folds_ok == 3 for r in rep.rows)
        assert all(0.0 <= r.f1_mean <= 1.0 for r in rep.rows)


class TestTuneThreshold:
    def test_matches_brute_force_argmax(self):
        from ctxtail.evaluation import tune_f1_threshold

        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(30, 200))
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            scores = rng.random(n)
            t = tune_f1_threshold(y, scores)
            got = f1_score(y, (scores >= t).astype(int))
            # oracle: scan every distinct score as a cutoff
            best = max(
                f1_score(y, (scores >= c).astype(int)) for c in np.unique(scores)
            )
            # the quantile grid may miss the exact optimum but must come close
            assert got >= best - 0.08
            assert got >= f1_score(y, (scores >= 0.5).astype(int)) - 0.08


class TestReportExport:
    def test_roundtrip_and_files(self, tmp_path):
        table, reg, ranking = small_sweep_inputs(3)
        rep = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 50}),
                    q_list=(0, 50, 100), k=3, seed=2)
        files = export_report([rep], tmp_path / "out")
        names = {f.name for f in files}
        assert "report.tsv" in names and "improvements.tsv" in names
        assert any(n.startswith("curves_") and n.endswith(".svg") for n in names)
        assert any(n.startswith("longtail_") and n.endswith(".svg") for n in names)
        rows = read_report_table(tmp_path / "out" / "report.tsv")
        assert len(rows) == 3
        by_q = {r["q"]: r for r in rows}
        for r in rep.rows:
            assert by_q[r.q]["auc_mean"] == pytest.approx(r.auc_mean, rel=1e-12)
            assert by_q[r.q]["f1_mean"] == pytest.approx(r.f1_mean, rel=1e-12)

    def test_eleven_q_points_eleven_markers(self, tmp_path):
        table, reg, ranking = small_sweep_inputs(4)
        qs = tuple(range(0, 101, 10))
        rep = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 30}), q_list=qs, k=3, seed=0)
        assert len(rep.rows) == 11
        export_report([rep], tmp_path / "out", make_plots=True)
        svg = next((tmp_path / "out").glob("curves_*.svg")).read_text()
        # one marker group per q point per metric panel for the single model
        assert svg.count("<use") >= 22

    def test_unwritable_dir_errors(self, tmp_path):
        table, reg, ranking = small_sweep_inputs(5)
        rep = sweep(table, reg, ranking, ModelSpec("logreg", {"max_iter": 10}), q_list=(0,), k=3, seed=0)
        target = tmp_path / "blocked"
        target.write_text("a file, not a dir")
        with pytest.raises(EvaluationError):
            export_report([rep], target)

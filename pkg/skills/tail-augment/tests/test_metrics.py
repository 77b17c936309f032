"""
Tests for ranking metrics, F1, the significance test and the evaluation report.
"""

import json
import math
import os
import tempfile

import numpy as np
import pytest
from scipy import stats

from tail_augment.corpus import Corpus, Document, build_label_space, split_head_tail
from tail_augment.errors import ParseError, ShapeError, ValidationError
from tail_augment.metrics import (
    evaluate,
    macro_f1,
    micro_f1,
    ndcg_at_k,
    per_label_scores,
    pooled_ttest,
    precision_at_k,
    read_runs,
)


# Five-run F1 values of a strong baseline and the augmented model, with the
# published two-tailed p-values.
PUBLISHED_RUNS = {
    "AAPD": ([68.77, 68.85, 68.91, 68.56, 68.86], [69.32, 69.89, 70.17, 69.69, 69.98], 0.00019),
    "RCV1": ([79.48, 79.64, 79.55, 79.44, 79.49], [79.75, 79.93, 79.88, 79.73, 79.91], 0.00037),
    "EUR-Lex": ([53.56, 53.78, 53.21, 53.29, 52.86], [54.79, 54.87, 54.36, 54.45, 54.93], 0.00013),
}


def _brute_force(scores, truth, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    hits = [1.0 if truth[i] else 0.0 for i in order]
    p = sum(hits) / k
    n_rel = int(sum(1 for y in truth if y))
    if n_rel == 0:
        return p, 0.0
    dcg = sum(h / math.log2(t + 2) for t, h in enumerate(hits))
    ideal = sum(1.0 / math.log2(t + 2) for t in range(min(k, n_rel)))
    return p, dcg / ideal


# ---------------------------------------------------------------------------
# 1. Ranking metrics
# ---------------------------------------------------------------------------

class TestRanking:
    """Tests for precision_at_k and ndcg_at_k."""

    def test_hand_example_precision(self):
        assert precision_at_k(np.array([0.9, 0.8, 0.1, 0.7]), np.array([1, 0, 0, 1]), 3) == pytest.approx(2 / 3)

    def test_hand_example_ndcg(self):
        value = ndcg_at_k(np.array([0.9, 0.5, 0.1]), np.array([1, 0, 1]), 3)
        assert value == pytest.approx(1.5 / (1 + 1 / math.log2(3)), abs=1e-12)
        assert value == pytest.approx(0.91972, abs=1e-5)

    def test_no_relevant_labels(self):
        scores = np.array([0.3, 0.2, 0.1])
        assert precision_at_k(scores, np.zeros(3), 2) == 0.0
        assert ndcg_at_k(scores, np.zeros(3), 2) == 0.0

    def test_ideal_ranking(self):
        assert ndcg_at_k(np.array([0.9, 0.8, 0.1]), np.array([1, 1, 0]), 3) == 1.0

    def test_ties_go_to_lower_index(self):
        assert precision_at_k(np.array([0.5, 0.5]), np.array([1, 0]), 1) == 1.0
        assert precision_at_k(np.array([0.5, 0.5]), np.array([0, 1]), 1) == 0.0

    def test_k_out_of_range(self):
        with pytest.raises(ValidationError):
            precision_at_k(np.zeros(3), np.zeros(3), 4)
        with pytest.raises(ValidationError):
            ndcg_at_k(np.zeros(3), np.zeros(3), 0)
        with pytest.raises(ShapeError):
            ndcg_at_k(np.zeros(3), np.zeros(2), 1)

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            scores = np.round(rng.random(n), 1)
            truth = rng.random(n) < 0.4
            k = int(rng.integers(1, n + 1))
            p, ndcg = _brute_force(scores, truth, k)
            assert precision_at_k(scores, truth, k) == pytest.approx(p, abs=1e-12)
            assert ndcg_at_k(scores, truth, k) == pytest.approx(ndcg, abs=1e-12)
            assert precision_at_k(scores, truth, 1) == ndcg_at_k(scores, truth, 1) or not truth.any()
            assert precision_at_k(np.exp(3 * scores), truth, k) == precision_at_k(scores, truth, k)
            assert 0.0 <= ndcg_at_k(scores, truth, k) <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# 2. F1
# ---------------------------------------------------------------------------

class TestF1:
    """Tests for per_label_scores, macro_f1 and micro_f1."""

    def test_hand_confusion(self):
        truth = np.array([[1, 0], [0, 1], [0, 1]])
        pred = np.array([[1, 0], [1, 1], [0, 0]])
        precision, recall, f1, support = per_label_scores(pred, truth)
        np.testing.assert_allclose(f1, [2 / 3, 2 / 3])
        np.testing.assert_array_equal(support, [1, 2])
        assert macro_f1(pred, truth) == pytest.approx(2 / 3)

    def test_perfect(self):
        truth = np.array([[1, 0, 1], [0, 1, 0]])
        assert macro_f1(truth, truth) == 1.0
        assert micro_f1(truth, truth) == 1.0

    def test_never_true_never_predicted_counts_zero(self):
        truth = np.array([[1, 0]])
        assert macro_f1(truth, truth) == 0.5

    def test_subset_and_permutation(self):
        rng = np.random.default_rng(1)
        truth = rng.random((20, 5)) < 0.3
        pred = rng.random((20, 5)) < 0.3
        perm = rng.permutation(5)
        assert macro_f1(pred[:, perm], truth[:, perm]) == pytest.approx(macro_f1(pred, truth))
        assert macro_f1(pred, truth, [0, 2]) == pytest.approx(per_label_scores(pred, truth)[2][[0, 2]].mean())

    def test_empty_subset(self):
        with pytest.raises(ValidationError):
            macro_f1(np.ones((1, 2)), np.ones((1, 2)), [])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            macro_f1(np.ones((1, 2)), np.ones((2, 2)))


# ---------------------------------------------------------------------------
# 3. Significance test
# ---------------------------------------------------------------------------

class TestPooledTTest:
    """Tests for pooled_ttest and read_runs."""

    @pytest.mark.parametrize("name", sorted(PUBLISHED_RUNS))
    def test_published_runs(self, name):
        a, b, published = PUBLISHED_RUNS[name]
        result = pooled_ttest(a, b)
        oracle = stats.ttest_ind(a, b, equal_var=True)
        assert result.df == 8
        assert result.t == pytest.approx(oracle.statistic, rel=1e-9)
        assert result.p == pytest.approx(oracle.pvalue, rel=1e-6)
        assert result.p == pytest.approx(published, rel=0.05)

    def test_random_groups_match_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.normal(size=int(rng.integers(2, 8)))
            b = rng.normal(loc=0.5, size=int(rng.integers(2, 8)))
            oracle = stats.ttest_ind(a, b)
            result = pooled_ttest(a, b)
            assert result.p == pytest.approx(oracle.pvalue, rel=1e-6, abs=1e-12)

    def test_symmetric(self):
        a, b, _ = PUBLISHED_RUNS["AAPD"]
        forward, backward = pooled_ttest(a, b), pooled_ttest(b, a)
        assert forward.p == pytest.approx(backward.p, rel=1e-12)
        assert abs(forward.t) == pytest.approx(abs(backward.t), rel=1e-12)

    def test_identical_groups(self):
        result = pooled_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.t == 0.0
        assert result.p == pytest.approx(1.0)

    def test_zero_variance(self):
        assert pooled_ttest([1.0, 1.0], [1.0, 1.0]).p == 1.0
        result = pooled_ttest([1.0, 1.0], [2.0, 2.0])
        assert result.p == 0.0
        assert result.t == -math.inf

    def test_too_few_values(self):
        with pytest.raises(ValidationError):
            pooled_ttest([1.0], [1.0, 2.0])

    def test_read_runs(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "runs.txt")
            with open(path, "w", encoding="utf-8") as f:
                f.write("# five runs\n68.77\n\n68.85  # second\n")
            assert read_runs(path) == [68.77, 68.85]
            with open(path, "w", encoding="utf-8") as f:
                f.write("1.0\nabc\n")
            with pytest.raises(ParseError, match=":2:"):
                read_runs(path)


# ---------------------------------------------------------------------------
# 4. Report
# ---------------------------------------------------------------------------

class TestEvaluate:
    """Tests for evaluate and EvalReport serialisation."""

    def _space(self):
        corpus = Corpus([
            Document("a", (), ("H1",)),
            Document("b", (), ("H1", "H2")),
            Document("c", (), ("H2",)),
            Document("d", (), ("T",)),
        ])
        return split_head_tail(build_label_space(corpus), 1)

    def test_report(self):
        space = self._space()
        assert space.ordered == ("H1", "H2", "T")
        truth = np.array([[1, 0, 0], [0, 1, 1], [0, 0, 0]])
        scores = np.array([[0.9, 0.2, 0.1], [0.6, 0.7, 0.4], [0.1, 0.1, 0.1]])
        report = evaluate(scores, truth, space)
        assert report.n_documents == 3
        assert report.skipped_documents == 1
        assert report.p_at_k[1] == pytest.approx(1.0)
        assert report.p_at_k[3] == pytest.approx(0.5)
        assert report.ndcg_at_k[1] == report.p_at_k[1]
        assert 5 not in report.p_at_k
        assert report.tail_macro_f1 == 0.0
        assert report.head_macro_f1 == pytest.approx(2 / 3 * 0.5 + 0.5)
        assert report.per_label[2] == {"label": "T", "group": "tail", "precision": 0.0, "recall": 0.0,
                                       "f1": 0.0, "support": 1}

    def test_zero_support_flagged(self):
        space = self._space()
        report = evaluate(np.array([[0.9, 0.1, 0.1]]), np.array([[1, 0, 0]]), space)
        assert report.zero_support == ["H2", "T"]
        assert "Labels with no test documents" in report.summary()

    def test_serialisation(self):
        space = self._space()
        report = evaluate(np.array([[0.9, 0.1, 0.6]]), np.array([[1, 0, 1]]), space)
        data = json.loads(report.to_json())
        assert data["ranking"]["p@1"] == 1.0
        assert data["counts"]["documents"] == 1
        tsv = report.to_tsv().splitlines()
        assert tsv[0] == "p@1\t1.0"
        assert "head_macro_f1\t0.5" in tsv
        assert tsv[-1].startswith("label:T\t")
        assert "Macro-F1" in report.summary()

    def test_shape_checks(self):
        space = self._space()
        with pytest.raises(ShapeError):
            evaluate(np.zeros((1, 2)), np.zeros((1, 2)), space)
        with pytest.raises(ShapeError):
            evaluate(np.zeros((1, 3)), np.zeros((2, 3)), space)

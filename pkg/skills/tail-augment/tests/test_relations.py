"""
Tests for relation collection.
"""

import numpy as np
import pytest

from tail_augment.corpus import Corpus, Document, build_label_space, split_head_tail
from tail_augment.errors import ShapeError, StateError, ValidationError
from tail_augment.relations import collect, relation_stats, relations_from_vectors
from tail_augment.synthgen import SynthSpec, generate


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _setup(rng, n_per_head=6, heads=3, d=4):
    docs = []
    for b in range(heads):
        for i in range(n_per_head):
            docs.append(Document(f"h{b}-{i}", (), (f"H{b}",)))
    docs.append(Document("t0", (), ("T",)))
    corpus = Corpus(docs)
    space = split_head_tail(build_label_space(corpus), 1)
    R = rng.standard_normal((len(corpus), d))
    return R, corpus, space


# ---------------------------------------------------------------------------
# 1. Collection
# ---------------------------------------------------------------------------

class TestCollect:
    """Tests for collect."""

    def test_count_and_shape(self):
        R, corpus, space = _setup(np.random.default_rng(0))
        rel = collect(R, corpus, space, p=7, seed=1)
        assert rel.vectors.shape == (3, 7, 4)
        assert len(rel) == 3 * 7
        assert rel.heads == space.head

    def test_vectors_are_differences_of_distinct_members(self):
        R, corpus, space = _setup(np.random.default_rng(1))
        rel = collect(R, corpus, space, p=20, seed=2)
        np.testing.assert_array_equal(rel.vectors, rel.recompute(R))
        assert np.all(rel.left != rel.right)
        for b, head in enumerate(rel.heads):
            members = set(corpus.positions_with_label(head))
            assert set(rel.left[b].tolist()) <= members
            assert set(rel.right[b].tolist()) <= members

    def test_reversed_pair_negates(self):
        corpus = Corpus([Document("a", (), ("H",)), Document("b", (), ("H",)), Document("t", (), ("T",))])
        space = split_head_tail(build_label_space(corpus), 1)
        R = np.array([[1.0, 2.0], [3.0, 5.0], [0.0, 0.0]])
        rel = collect(R, corpus, space, p=10, seed=0)
        for z in range(10):
            expected = [-2.0, -3.0] if rel.left[0, z] == 0 else [2.0, 3.0]
            np.testing.assert_array_equal(rel.vectors[0, z], expected)

    def test_deterministic_and_worker_independent(self):
        R, corpus, space = _setup(np.random.default_rng(2))
        a = collect(R, corpus, space, p=5, seed=9)
        b = collect(R, corpus, space, p=5, seed=9, workers=4)
        assert np.array_equal(a.vectors, b.vectors)
        assert np.array_equal(a.left, b.left)
        c = collect(R, corpus, space, p=5, seed=10)
        assert not np.array_equal(a.left, c.left)

    def test_provenance(self):
        R, corpus, space = _setup(np.random.default_rng(3), heads=1)
        rel = collect(R, corpus, space, p=2, seed=0)
        rows = rel.provenance()
        assert len(rows) == 2
        head, z, left_id, right_id = rows[1]
        assert head == "H0" and z == 1
        assert left_id != right_id
        assert left_id.startswith("h0-")

    def test_single_document_head_rejected(self):
        corpus = Corpus([Document("a", (), ("H",)), Document("t", (), ("T",))])
        space = split_head_tail(build_label_space(corpus), 1)
        with pytest.raises(ValidationError, match="at least 2"):
            collect(np.zeros((2, 3)), corpus, space, p=1, seed=0)

    def test_invalid_arguments(self):
        R, corpus, space = _setup(np.random.default_rng(4))
        with pytest.raises(ValidationError):
            collect(R, corpus, space, p=0, seed=0)
        with pytest.raises(ShapeError):
            collect(R[:-1], corpus, space, p=1, seed=0)
        with pytest.raises(ValidationError):
            collect(R, corpus, split_head_tail(space, len(space)), p=1, seed=0)


# ---------------------------------------------------------------------------
# 2. Statistics
# ---------------------------------------------------------------------------

class TestRelationStats:
    """Tests for relation_stats and relations_from_vectors."""

    def test_stats(self):
        vectors = np.array([[[3.0, 4.0], [-3.0, -4.0]], [[0.0, 1.0], [0.0, 1.0]]])
        stats = relation_stats(relations_from_vectors(["A", "B"], vectors))
        assert stats["per_label_mean_norm"] == {"A": 5.0, "B": 1.0}
        assert stats["mean_norm"] == pytest.approx(3.0)
        np.testing.assert_allclose(stats["global_mean"], [0.0, 0.5])
        assert stats["global_mean_norm"] == pytest.approx(0.5)

    def test_shape_checked(self):
        with pytest.raises(ShapeError):
            relations_from_vectors(["A"], np.zeros((2, 1, 3)))

    def test_raw_vectors_have_no_provenance(self):
        rel = relations_from_vectors(["A"], np.ones((1, 2, 3)))
        assert not rel.has_provenance
        with pytest.raises(StateError, match="without source documents"):
            rel.provenance()
        with pytest.raises(StateError):
            rel.recompute(np.zeros((4, 3)))

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric_pairs_have_small_mean(self, seed):
        ds = generate(SynthSpec(d=32, n_head=4, n_tail=12, docs_per_head=200, seed=seed))
        rel = collect(ds.features.matrix, ds.corpus, ds.space, p=250, seed=seed)
        assert len(rel) == 1000
        stats = relation_stats(rel)
        assert stats["global_mean_norm"] <= 0.2 * stats["mean_norm"]

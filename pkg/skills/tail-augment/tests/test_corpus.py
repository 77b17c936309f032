"""
Tests for corpus, label space, embedding and feature file handling.

Covers: corpus line parsing, truncation, label-space construction and the
head/tail split, embedding and feature loaders (including malformed files),
writers, and dataset statistics.
"""

import os
import tempfile

import numpy as np
import pytest

from tail_augment.corpus import (
    Corpus,
    Document,
    FeatureFile,
    build_label_space,
    corpus_stats,
    load_corpus,
    load_embeddings,
    load_features,
    parse_corpus_line,
    split_head_tail,
    truncate,
    write_corpus,
    write_features,
)
from tail_augment.errors import FeatureLookupError, ParseError, ShapeError, ValidationError


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _write(tmp: str, name: str, text: str) -> str:
    path = os.path.join(tmp, name)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def _corpus(*label_sets) -> Corpus:
    return Corpus(Document(id=f"d{i}", tokens=("w",), labels=tuple(labels)) for i, labels in enumerate(label_sets))


# ---------------------------------------------------------------------------
# 1. Corpus parsing
# ---------------------------------------------------------------------------

class TestParseCorpusLine:
    """Tests for parse_corpus_line."""

    def test_basic_line(self):
        doc = parse_corpus_line("d1\tA,B\tthe cat sat", 1, 500)
        assert doc.id == "d1"
        assert doc.labels == ("A", "B")
        assert doc.tokens == ("the", "cat", "sat")

    def test_repeated_and_blank_labels_dropped(self):
        doc = parse_corpus_line("d1\tA, ,A,B\tx", 1, 500)
        assert doc.labels == ("A", "B")

    def test_wrong_field_count(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_corpus_line("d1\tA", 3, 500)

    def test_empty_labels_rejected_for_training(self):
        with pytest.raises(ValidationError, match="no labels"):
            parse_corpus_line("d1\t\tsome words", 1, 500)

    def test_empty_labels_allowed_for_test(self):
        doc = parse_corpus_line("d1\t\tsome words", 1, 500, require_labels=False)
        assert doc.labels == ()

    def test_empty_tokens_allowed(self):
        doc = parse_corpus_line("d1\tA\t", 1, 500)
        assert doc.tokens == ()


class TestTruncate:
    """Tests for truncate."""

    def test_keeps_last_tokens(self):
        assert truncate(["a", "b", "c", "d"], 2) == ("c", "d")

    def test_short_sequence_unchanged(self):
        assert truncate(["a"], 5) == ("a",)

    def test_600_tokens_keep_last_500(self):
        tokens = [f"w{i}" for i in range(600)]
        out = truncate(tokens, 500)
        assert len(out) == 500
        assert out[0] == "w100"

    def test_invalid_limit(self):
        with pytest.raises(ValidationError):
            truncate(["a"], 0)


class TestLoadCorpus:
    """Tests for load_corpus and write_corpus."""

    def test_load_and_label_space(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "c.txt", "d1\tB,A\tx y\n\nd2\tA\tz\nd3\tC\tq\n")
            corpus, space = load_corpus(path)
        assert corpus.ids == ["d1", "d2", "d3"]
        assert space.labels == ("B", "A", "C")
        assert space.freq == {"B": 1, "A": 2, "C": 1}

    def test_duplicate_doc_id_names_lines(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "c.txt", "d1\tA\tx\nd1\tB\ty\n")
            with pytest.raises(ValidationError, match="duplicate doc_id 'd1'"):
                load_corpus(path)

    def test_truncation_applied(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "c.txt", "d1\tA\ta b c d\n")
            corpus, _ = load_corpus(path, max_words=2)
        assert corpus["d1"].tokens == ("c", "d")

    def test_write_then_load(self):
        docs = [Document("a", ("x", "y"), ("L1",)), Document("b", (), ("L1", "L2"))]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "out", "c.txt")
            write_corpus(path, docs)
            corpus, space = load_corpus(path)
        assert [d.labels for d in corpus] == [("L1",), ("L1", "L2")]
        assert corpus["b"].tokens == ()
        assert space.freq == {"L1": 2, "L2": 1}


# ---------------------------------------------------------------------------
# 2. Label space
# ---------------------------------------------------------------------------

class TestLabelSpace:
    """Tests for build_label_space and split_head_tail."""

    def test_split_example(self):
        corpus = _corpus(*([["A"]] * 10 + [["B"]] * 5 + [["C"]] * 1))
        space = split_head_tail(build_label_space(corpus), 1)
        assert space.head == ("A", "B")
        assert space.tail == ("C",)

    def test_ties_broken_by_first_appearance(self):
        corpus = _corpus(["X"], ["Y"], ["Z"], ["Z"])
        space = split_head_tail(build_label_space(corpus), 2)
        assert space.head == ("Z",)
        assert space.tail == ("X", "Y")

    def test_tail_count_bounds(self):
        space = build_label_space(_corpus(["A"], ["B"]))
        with pytest.raises(ValidationError):
            split_head_tail(space, 3)
        with pytest.raises(ValidationError):
            split_head_tail(space, -1)
        assert split_head_tail(space, 0).tail == ()
        assert split_head_tail(space, 2).head == ()

    def test_partition_and_frequency_order(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            labels = [f"L{int(i)}" for i in rng.integers(0, 8, size=40)]
            space = build_label_space(_corpus(*[[label] for label in labels]))
            cut = int(rng.integers(0, len(space) + 1))
            split = split_head_tail(space, cut)
            assert set(split.head) | set(split.tail) == set(space.labels)
            assert not set(split.head) & set(split.tail)
            if split.head and split.tail:
                assert min(split.freq[x] for x in split.head) >= max(split.freq[x] for x in split.tail)

    def test_appearance_permutation(self):
        space = split_head_tail(build_label_space(_corpus(["C"], ["A"], ["A"], ["B"])), 1)
        rows = np.arange(3)
        assert [space.labels[i] for i in rows[space.appearance_permutation()]] == list(space.ordered)

    def test_dict_round_trip(self):
        space = split_head_tail(build_label_space(_corpus(["A"], ["A"], ["B"])), 1)
        assert type(space).from_dict(space.to_dict()) == space

    def test_targets_follow_given_order(self):
        corpus = _corpus(["A", "B"], ["B"])
        y = corpus.targets(("B", "A"))
        np.testing.assert_array_equal(y, [[1.0, 1.0], [1.0, 0.0]])

    def test_restrict_labels_counts_drops(self):
        space = build_label_space(_corpus(["A"]))
        restricted, dropped = _corpus(["A", "Z"], ["Z"]).restrict_labels(space)
        assert dropped == 2
        assert [d.labels for d in restricted] == [("A",), ()]


# ---------------------------------------------------------------------------
# 3. Embeddings
# ---------------------------------------------------------------------------

class TestLoadEmbeddings:
    """Tests for load_embeddings and EmbeddingTable."""

    def test_load_and_lookup(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "emb.txt", "cat 1 2 3\ndog 4 5 6\n")
            table = load_embeddings(path)
        assert table.dim == 3
        np.testing.assert_array_equal(table.lookup("dog"), [4.0, 5.0, 6.0])
        np.testing.assert_array_equal(table.lookup("unicorn"), [0.0, 0.0, 0.0])

    def test_length_mismatch_names_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "emb.txt", "cat 1 2 3\ndog 4 5\n")
            with pytest.raises(ParseError, match=":2:"):
                load_embeddings(path)

    def test_non_numeric(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "emb.txt", "cat 1 x 3\n")
            with pytest.raises(ParseError):
                load_embeddings(path)

    def test_duplicates_keep_first(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "emb.txt", "cat 1 1\ncat 2 2\n")
            table = load_embeddings(path)
        assert table.duplicates == 1
        np.testing.assert_array_equal(table.lookup("cat"), [1.0, 1.0])

    def test_oov_row_is_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = load_embeddings(_write(tmp, "emb.txt", "a 1 2\n"))
        matrix = table.matrix_with_oov()
        np.testing.assert_array_equal(table.token_indices(["a", "zzz"]), [0, table.oov_row])
        np.testing.assert_array_equal(matrix[table.oov_row], [0.0, 0.0])


# ---------------------------------------------------------------------------
# 4. Feature files
# ---------------------------------------------------------------------------

class TestFeatures:
    """Tests for load_features, write_features and FeatureFile lookups."""

    def test_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "f.txt", "2 2\na 1 2\nb 3 4\n")
            features = load_features(path)
        np.testing.assert_array_equal(features.row("b"), [3.0, 4.0])
        np.testing.assert_array_equal(features.rows(["b", "a"]), [[3.0, 4.0], [1.0, 2.0]])

    def test_count_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "f.txt", "2 3\na 1 2\n")
            with pytest.raises(ParseError, match="declares 3 rows"):
                load_features(path)

    def test_wrong_width(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "f.txt", "2 1\na 1 2 3\n")
            with pytest.raises(ParseError):
                load_features(path)

    def test_missing_id(self):
        features = FeatureFile(ids=("a",), matrix=np.zeros((1, 2)))
        with pytest.raises(FeatureLookupError):
            features.row("b")
        with pytest.raises(FeatureLookupError):
            features.rows(["a", "b"])

    def test_shape_checked(self):
        with pytest.raises(ShapeError):
            FeatureFile(ids=("a", "b"), matrix=np.zeros((1, 2)))

    def test_written_values_are_exact(self):
        rng = np.random.default_rng(7)
        original = FeatureFile(ids=("x", "y", "z"), matrix=rng.standard_normal((3, 4)) * 1e-3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "f.txt")
            write_features(path, original)
            loaded = load_features(path)
        assert loaded.ids == original.ids
        assert np.array_equal(loaded.matrix, original.matrix)


# ---------------------------------------------------------------------------
# 5. Statistics
# ---------------------------------------------------------------------------

class TestCorpusStats:
    """Tests for corpus_stats."""

    def test_stats(self):
        corpus = Corpus([
            Document("a", ("x", "y"), ("A", "B")),
            Document("b", ("x",), ("A",)),
        ])
        space = split_head_tail(build_label_space(corpus), 1)
        stats = corpus_stats(corpus, space)
        assert stats["documents"] == 2
        assert stats["labels"] == 2
        assert stats["avg_labels_per_doc"] == pytest.approx(1.5)
        assert stats["avg_docs_per_label"] == pytest.approx(1.5)
        assert stats["avg_words_per_doc"] == pytest.approx(1.5)
        assert stats["tail_labels"] == 1
        assert stats["max_tail_freq"] == 1

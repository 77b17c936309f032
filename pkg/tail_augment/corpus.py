"""
Corpus, label space, embedding and feature file ingestion.

Every reader validates line by line and reports the offending line number,
so a malformed input fails loudly instead of producing a silently shifted
dataset. Loaded structures are read-only afterwards and safe to share.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import FeatureLookupError, ParseError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_MAX_WORDS = 500

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Shortest decimal string that parses back to exactly the same double."""
    return repr(float(value))


def truncate(tokens: Sequence[str], max_words: int) -> tuple:
    """Keep only the last max_words tokens."""
    if max_words < 1:
        raise ValidationError(f"max_words must be >= 1, got {max_words}")
    tokens = tuple(tokens)
    if len(tokens) > max_words:
        return tokens[-max_words:]
    return tokens


def _split_labels(raw: str) -> tuple:
    """Split a comma-separated label field, dropping blanks and repeats."""
    seen = []
    for part in raw.split(","):
        label = part.strip()
        if label and label not in seen:
            seen.append(label)
    return tuple(seen)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Document:
    """One document: id, (truncated) token sequence and label set."""

    id: str
    tokens: tuple
    labels: tuple


class Corpus:
    """Ordered, id-indexed collection of documents."""

    def __init__(self, documents: Iterable[Document]):
        self.documents = list(documents)
        self._index = {}
        for pos, doc in enumerate(self.documents):
            if doc.id in self._index:
                raise ValidationError(f"duplicate doc_id {doc.id!r}")
            self._index[doc.id] = pos

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self.documents[self._index[doc_id]]

    @property
    def ids(self) -> list:
        return [doc.id for doc in self.documents]

    def positions_with_label(self, label: str) -> list:
        """Corpus positions of every document carrying label, in corpus order."""
        return [pos for pos, doc in enumerate(self.documents) if label in doc.labels]

    def targets(self, labels: Sequence[str]) -> np.ndarray:
        """Binary N x len(labels) target matrix, columns in the given label order."""
        order = {label: j for j, label in enumerate(labels)}
        y = np.zeros((len(self.documents), len(order)), dtype=np.float64)
        for i, doc in enumerate(self.documents):
            for label in doc.labels:
                j = order.get(label)
                if j is not None:
                    y[i, j] = 1.0
        return y

    def restrict_labels(self, space: "LabelSpace") -> tuple:
        """
        Drop labels unknown to space.

        Returns:
            (new Corpus, number of dropped label occurrences)
        """
        known = set(space.labels)
        dropped = 0
        docs = []
        for doc in self.documents:
            kept = tuple(label for label in doc.labels if label in known)
            dropped += len(doc.labels) - len(kept)
            docs.append(Document(doc.id, doc.tokens, kept))
        if dropped:
            logger.warning("Dropped %d label occurrences unknown to the training label space", dropped)
        return Corpus(docs), dropped


@dataclass(frozen=True)
class LabelSpace:
    """
    Label inventory with exact training frequencies and the head/tail split.

    labels is first-appearance order. head and tail are each sorted by
    descending frequency (ties by first appearance); classifier rows follow
    head ++ tail.
    """

    labels: tuple
    freq: dict
    head: tuple
    tail: tuple = ()

    @property
    def ordered(self) -> tuple:
        return self.head + self.tail

    @property
    def row_index(self) -> dict:
        return {label: j for j, label in enumerate(self.ordered)}

    @property
    def head_count(self) -> int:
        return len(self.head)

    @property
    def tail_count(self) -> int:
        return len(self.tail)

    def __len__(self) -> int:
        return len(self.labels)

    def appearance_permutation(self) -> np.ndarray:
        """perm such that rows_in_label_order[perm] gives head ++ tail order."""
        position = {label: i for i, label in enumerate(self.labels)}
        return np.array([position[label] for label in self.ordered], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "freq": {label: self.freq[label] for label in self.labels},
            "head": list(self.head),
            "tail": list(self.tail),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LabelSpace":
        return cls(
            labels=tuple(data["labels"]),
            freq={label: int(count) for label, count in data["freq"].items()},
            head=tuple(data["head"]),
            tail=tuple(data["tail"]),
        )


def _ranked(labels: Sequence[str], freq: dict) -> list:
    """Labels by descending frequency, first-appearance order breaking ties."""
    return [label for _, label in sorted(enumerate(labels), key=lambda item: (-freq[item[1]], item[0]))]


def build_label_space(corpus: Corpus) -> LabelSpace:
    """Count label frequencies over a corpus; every label starts as head."""
    labels = []
    freq = {}
    for doc in corpus:
        for label in doc.labels:
            if label not in freq:
                labels.append(label)
                freq[label] = 0
            freq[label] += 1
    return LabelSpace(labels=tuple(labels), freq=freq, head=tuple(_ranked(labels, freq)), tail=())


def split_head_tail(space: LabelSpace, tail_count: int) -> LabelSpace:
    """
    Partition labels so the tail_count least frequent ones become tail.

    Args:
        space: Label space with exact frequencies.
        tail_count: Number of tail labels, 0 <= tail_count <= l.

    Returns:
        A new LabelSpace; head/tail both sorted by descending frequency.
    """
    total = len(space.labels)
    if tail_count < 0 or tail_count > total:
        raise ValidationError(f"tail_count must be in [0, {total}], got {tail_count}")
    ranked = _ranked(space.labels, space.freq)
    cut = total - tail_count
    return LabelSpace(labels=space.labels, freq=dict(space.freq), head=tuple(ranked[:cut]), tail=tuple(ranked[cut:]))


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

def parse_corpus_line(line: str, line_no: int, max_words: int, require_labels: bool = True,
                      path: Optional[str] = None) -> Document:
    """Parse `doc_id<TAB>labels<TAB>tokens` into a Document."""
    fields = line.split("\t")
    if len(fields) != 3:
        raise ParseError(f"expected 3 tab-separated fields, found {len(fields)}", path=path, line=line_no)
    doc_id, raw_labels, raw_tokens = fields
    doc_id = doc_id.strip()
    if not doc_id:
        raise ParseError("empty doc_id", path=path, line=line_no)
    labels = _split_labels(raw_labels)
    if require_labels and not labels:
        where = f"{path}:{line_no}" if path else f"line {line_no}"
        raise ValidationError(f"{where}: training document {doc_id!r} has no labels")
    return Document(id=doc_id, tokens=truncate(raw_tokens.split(), max_words), labels=labels)


def load_corpus(path: PathLike, max_words: int = DEFAULT_MAX_WORDS, require_labels: bool = True) -> tuple:
    """
    Load a corpus file and count its label frequencies.

    Args:
        path: UTF-8 file, one `doc_id<TAB>l1,l2<TAB>w1 w2 ...` per line.
        max_words: Only the last max_words tokens of each document are kept.
        require_labels: Reject documents without labels (training corpora).

    Returns:
        (Corpus, LabelSpace) with label order = first appearance.
    """
    if max_words < 1:
        raise ValidationError(f"max_words must be >= 1, got {max_words}")
    path = str(path)
    documents = []
    seen = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            doc = parse_corpus_line(line, line_no, max_words, require_labels=require_labels, path=path)
            if doc.id in seen:
                raise ValidationError(
                    f"{path}:{line_no}: duplicate doc_id {doc.id!r} (first seen on line {seen[doc.id]})"
                )
            seen[doc.id] = line_no
            documents.append(doc)

    corpus = Corpus(documents)
    space = build_label_space(corpus)
    logger.info("Loaded %d documents with %d labels from %s", len(corpus), len(space), path)
    return corpus, space


def write_corpus(path: PathLike, documents: Iterable[Document]) -> None:
    """Write documents in the corpus format (empty token fields allowed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in documents:
            f.write(f"{doc.id}\t{','.join(doc.labels)}\t{' '.join(doc.tokens)}\n")


def corpus_stats(corpus: Corpus, space: LabelSpace) -> dict:
    """Dataset summary: sizes and average label / word counts."""
    n_docs = len(corpus)
    n_labels = len(space.labels)
    label_links = sum(len(doc.labels) for doc in corpus)
    words = sum(len(doc.tokens) for doc in corpus)
    stats = {
        "documents": n_docs,
        "labels": n_labels,
        "avg_labels_per_doc": label_links / n_docs if n_docs else 0.0,
        "avg_docs_per_label": label_links / n_labels if n_labels else 0.0,
        "avg_words_per_doc": words / n_docs if n_docs else 0.0,
        "head_labels": space.head_count,
        "tail_labels": space.tail_count,
    }
    if space.tail:
        stats["max_tail_freq"] = max(space.freq[label] for label in space.tail)
    if space.head:
        stats["min_head_freq"] = min(space.freq[label] for label in space.head)
    return stats


# ---------------------------------------------------------------------------
# Word embeddings
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EmbeddingTable:
    """Word vectors from a GloVe-style text file; unknown words map to zeros."""

    words: tuple
    vectors: np.ndarray
    oov_policy: str = "zero"
    duplicates: int = 0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.words):
            raise ShapeError(
                f"vectors shape {self.vectors.shape} does not match {len(self.words)} words"
            )
        if self.oov_policy != "zero":
            raise ValidationError(f"unsupported oov_policy {self.oov_policy!r}")
        if not self._index:
            self._index = {word: i for i, word in enumerate(self.words)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def oov_row(self) -> int:
        """Row index reserved for unknown words in matrix_with_oov()."""
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def lookup(self, word: str) -> np.ndarray:
        i = self._index.get(word)
        if i is None:
            return np.zeros(self.dim, dtype=np.float64)
        return self.vectors[i].copy()

    def matrix_with_oov(self) -> np.ndarray:
        """Embedding matrix with one trailing zero row for OOV tokens."""
        return np.vstack([self.vectors, np.zeros((1, self.dim), dtype=np.float64)])

    def token_indices(self, tokens: Sequence[str]) -> np.ndarray:
        oov = self.oov_row
        return np.array([self._index.get(tok, oov) for tok in tokens], dtype=np.int64)


def load_embeddings(path: PathLike) -> EmbeddingTable:
    """
    Load a word-per-line embedding file (`word v1 ... vdim`).

    Duplicate words keep their first vector; the number of duplicates is
    logged and stored on the table.
    """
    path = str(path)
    words = []
    rows = []
    seen = set()
    duplicates = 0
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.rstrip("\r\n").split(" ")
            parts = [p for p in parts if p != ""]
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if not values:
                raise ParseError(f"word {word!r} has no vector", path=path, line=line_no)
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ParseError(
                    f"vector for {word!r} has length {len(values)}, expected {dim}", path=path, line=line_no
                )
            try:
                vector = [float(v) for v in values]
            except ValueError as e:
                raise ParseError(f"non-numeric vector entry: {e}", path=path, line=line_no) from None
            if word in seen:
                duplicates += 1
                continue
            seen.add(word)
            words.append(word)
            rows.append(vector)

    if dim is None:
        raise ParseError("embedding file is empty", path=path)
    if duplicates:
        logger.warning("%d duplicate words in %s; kept first occurrences", duplicates, path)
    table = EmbeddingTable(words=tuple(words), vectors=np.array(rows, dtype=np.float64), duplicates=duplicates)
    logger.info("Loaded %d embeddings of dim %d from %s", len(words), dim, path)
    return table


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FeatureFile:
    """Precomputed document representations keyed by doc_id."""

    ids: tuple
    matrix: np.ndarray
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ShapeError(f"matrix shape {self.matrix.shape} does not match {len(self.ids)} ids")
        index = {}
        for i, doc_id in enumerate(self.ids):
            if doc_id in index:
                raise ValidationError(f"duplicate doc_id {doc_id!r} in feature rows")
            index[doc_id] = i
        self._index = index

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, doc_id: str) -> np.ndarray:
        i = self._index.get(doc_id)
        if i is None:
            raise FeatureLookupError(f"doc_id {doc_id!r} missing from feature file")
        return self.matrix[i]

    def rows(self, doc_ids: Sequence[str]) -> np.ndarray:
        """Rows for doc_ids, in the given order."""
        missing = [d for d in doc_ids if d not in self._index]
        if missing:
            raise FeatureLookupError(
                f"{len(missing)} doc_ids missing from feature file (first: {missing[0]!r})"
            )
        return self.matrix[[self._index[d] for d in doc_ids]]


def load_features(path: PathLike) -> FeatureFile:
    """Load a feature file: header `dim count`, then `doc_id f1 ... fdim`."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [(no, line.rstrip("\r\n")) for no, line in enumerate(f, start=1)]
    lines = [(no, line) for no, line in lines if line.strip()]
    if not lines:
        raise ParseError("feature file is empty", path=path)

    header_no, header = lines[0]
    try:
        dim, count = (int(v) for v in header.split())
    except ValueError:
        raise ParseError(f"bad header {header!r}, expected `dim count`", path=path, line=header_no) from None
    if dim < 1 or count < 0:
        raise ParseError(f"bad header values dim={dim} count={count}", path=path, line=header_no)

    body = lines[1:]
    if len(body) != count:
        raise ParseError(f"header declares {count} rows but file has {len(body)}", path=path)

    ids = []
    seen = {}
    matrix = np.empty((count, dim), dtype=np.float64)
    for i, (line_no, line) in enumerate(body):
        parts = line.split()
        if len(parts) != dim + 1:
            raise ParseError(f"expected id plus {dim} values, found {len(parts) - 1} values", path=path, line=line_no)
        doc_id = parts[0]
        if doc_id in seen:
            raise ValidationError(f"{path}:{line_no}: duplicate doc_id {doc_id!r} (first on line {seen[doc_id]})")
        seen[doc_id] = line_no
        try:
            matrix[i] = [float(v) for v in parts[1:]]
        except ValueError as e:
            raise ParseError(f"non-numeric feature value: {e}", path=path, line=line_no) from None
        ids.append(doc_id)

    logger.info("Loaded %d feature rows of dim %d from %s", count, dim, path)
    return FeatureFile(ids=tuple(ids), matrix=matrix)


def write_features(path: PathLike, features: FeatureFile) -> None:
    """Write a feature file with round-trip exact float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{features.dim} {len(features.ids)}\n")
        for doc_id, row in zip(features.ids, features.matrix):
            f.write(doc_id + " " + " ".join(format_float(v) for v in row) + "\n")

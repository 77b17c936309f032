"""
Relation collector: pairwise instance relations harvested from head labels.

For every head label, p ordered pairs of distinct documents carrying that
label are drawn (with replacement across pairs) and the difference of their
representations is stored as a transferable relation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, LabelSpace
from .errors import ShapeError, StateError, ValidationError
from .seeding import STREAM_RELATIONS, make_rng

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RelationSet:
    """
    Relations grouped by head label.

    vectors has shape (l_head, p, d); vectors[b, z] = R[left[b, z]] - R[right[b, z]]
    where left/right are corpus positions and doc_ids gives their ids.
    """

    heads: tuple
    vectors: np.ndarray
    left: np.ndarray
    right: np.ndarray
    doc_ids: tuple

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def __len__(self) -> int:
        return self.vectors.shape[0] * self.vectors.shape[1]

    @property
    def has_provenance(self) -> bool:
        return bool(self.doc_ids)

    def _require_provenance(self, action: str) -> None:
        if not self.has_provenance:
            raise StateError(f"cannot {action}: relations were built from raw vectors without source documents")

    def provenance(self) -> list:
        """(head label, z, left doc_id, right doc_id) for every relation."""
        self._require_provenance("list provenance")
        out = []
        for b, head in enumerate(self.heads):
            for z in range(self.p):
                out.append((head, z, self.doc_ids[self.left[b, z]], self.doc_ids[self.right[b, z]]))
        return out

    def recompute(self, representations: np.ndarray) -> np.ndarray:
        """Re-derive every relation from its provenance pair."""
        self._require_provenance("recompute relations")
        R =np.asarray(representations, dtype=np.float64)
        return R[self.left] - R[self.right]


def _draw_pairs(rng: np.random.Generator, pool: np.ndarray, p: int) -> tuple:
    """p ordered pairs of distinct pool members, uniform over ordered pairs."""
    n = len(pool)
    first = rng.integers(n, size=p)
    second = rng.integers(n - 1, size=p)
    second = second + (second >= first)
    return pool[first], pool[second]


def collect(representations: np.ndarray, corpus: Corpus, space: LabelSpace, p: int, seed: int,
            workers: int = 1) -> RelationSet:
    """
    Collect p relations per head label.

    Args:
        representations: (N, d) rows in corpus order.
        corpus: Corpus supplying label membership.
        space: Label space with the head/tail split.
        p: Pairs per head label (>= 1).
        seed: Base seed; each head label uses its own substream.
        workers: Head labels processed concurrently.
    """
    R = np.asarray(representations, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != len(corpus):
        raise ShapeError(f"representations {R.shape} do not match {len(corpus)} documents")
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    if not space.head:
        raise ValidationError("no head labels to collect relations from")

    pools = []
    for head in space.head:
        pool = np.array(corpus.positions_with_label(head), dtype=np.int64)
        if len(pool) < 2:
            raise ValidationError(f"head label {head!r} has {len(pool)} document(s); relations need at least 2")
        pools.append(pool)

    def run(b: int) -> tuple:
        return _draw_pairs(make_rng(seed, STREAM_RELATIONS, b), pools[b], p)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            pairs = list(pool_exec.map(run, range(len(pools))))
    else:
        pairs = [run(b) for b in range(len(pools))]

    left = np.stack([pair[0] for pair in pairs])
    right = np.stack([pair[1] for pair in pairs])
    vectors = R[left] - R[right]
    logger.info("Collected %d relations (%d head labels x p=%d)", left.size, len(space.head), p)
    return RelationSet(heads=tuple(space.head), vectors=vectors, left=left, right=right, doc_ids=tuple(corpus.ids))


def relation_stats(relations: RelationSet) -> dict:
    """Per-head mean relation norm and the global mean relation vector."""
    if len(relations) == 0:
        raise ValidationError("relation set is empty")
    norms = np.linalg.norm(relations.vectors, axis=2)
    flat = relations.vectors.reshape(-1, relations.dim)
    global_mean = flat.mean(axis=0)
    return {
        "per_label_mean_norm": {head: float(norms[b].mean()) for b, head in enumerate(relations.heads)},
        "mean_norm": float(norms.mean()),
        "global_mean": global_mean,
        "global_mean_norm": float(np.linalg.norm(global_mean)),
    }


def relations_from_vectors(heads: Sequence[str], vectors: np.ndarray) -> RelationSet:
    """RelationSet without provenance (e.g. hand-built relations)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 3 or vectors.shape[0] != len(heads):
        raise ShapeError(f"relation vectors {vectors.shape} do not match {len(heads)} heads")
    empty = np.zeros(vectors.shape[:2], dtype=np.int64)
    return RelationSet(heads=tuple(heads), vectors=vectors, left=empty, right=empty.copy(), doc_ids=())

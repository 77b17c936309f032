"""
Synthetic long-tailed multi-label datasets generated directly in feature space.

Each label gets a Gaussian center; documents are their label's center (or the
mean of their labels' centers) plus isotropic noise with the primary label's
spread. Head labels get many, widely spread documents; tail labels get a few
tight ones. Output is deterministic for a given seed.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import (
    Corpus,
    Document,
    FeatureFile,
    LabelSpace,
    build_label_space,
    split_head_tail,
    write_corpus,
    write_features,
)
from .errors import ValidationError
from .seeding import STREAM_SYNTH_TEST, STREAM_SYNTH_TRAIN, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    """Shape and noise parameters of a synthetic dataset."""

    d: int = 32
    n_head: int = 4
    n_tail: int = 12
    docs_per_head: int = 200
    docs_per_tail: int = 3
    intra_head_std: float = 1.0
    intra_tail_std: float = 0.3
    co_label_prob: float = 0.0
    seed: int = 0
    center_scale: float = 1.0
    test_docs_per_label: int = 0

    def validate(self) -> None:
        if self.d < 2:
            raise ValidationError(f"d must be >= 2 (eigenbasis needs rank >= 2), got {self.d}")
        for name in ("n_head", "n_tail", "docs_per_head", "docs_per_tail"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.test_docs_per_label < 0:
            raise ValidationError(f"test_docs_per_label must be >= 0, got {self.test_docs_per_label}")
        if self.intra_head_std < 0 or self.intra_tail_std < 0:
            raise ValidationError("intra-label standard deviations must be non-negative")
        if self.center_scale <= 0:
            raise ValidationError(f"center_scale must be positive, got {self.center_scale}")
        if not 0.0 <= self.co_label_prob <= 1.0:
            raise ValidationError(f"co_label_prob must be in [0, 1], got {self.co_label_prob}")
        if self.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {self.seed}")


@dataclass(eq=False)
class SynthDataset:
    """Generated train split (and optional test split) with ground-truth centers."""

    spec: SynthSpec
    centers: np.ndarray
    features: FeatureFile
    corpus: Corpus
    space: LabelSpace
    test_features: Optional[FeatureFile] = None
    test_corpus: Optional[Corpus] = None


def label_names(spec: SynthSpec) -> tuple:
    """(head label names, tail label names)."""
    width = max(2, len(str(max(spec.n_head, spec.n_tail) - 1)))
    head = tuple(f"head-{b:0{width}d}" for b in range(spec.n_head))
    tail = tuple(f"tail-{t:0{width}d}" for t in range(spec.n_tail))
    return head, tail


def _draw_split(rng: np.random.Generator, spec: SynthSpec, centers: np.ndarray,
                per_head: int, per_tail: int, prefix: str) -> tuple:
    head_names, tail_names = label_names(spec)
    rows = []
    docs = []

    def add(labels: tuple, base: np.ndarray, std: float):
        x = base + std * rng.standard_normal(spec.d)
        docs.append(Document(id=f"{prefix}{len(docs):06d}", tokens=(), labels=labels))
        rows.append(x)

    for b in range(spec.n_head):
        for _ in range(per_head):
            add((head_names[b],), centers[b], spec.intra_head_std)

    for t in range(spec.n_tail):
        center = centers[spec.n_head + t]
        for _ in range(per_tail):
            if spec.co_label_prob > 0 and rng.random() < spec.co_label_prob:
                b = int(rng.integers(spec.n_head))
                add((tail_names[t], head_names[b]), (center + centers[b]) / 2.0, spec.intra_tail_std)
            else:
                add((tail_names[t],), center, spec.intra_tail_std)

    features = FeatureFile(ids=tuple(doc.id for doc in docs), matrix=np.array(rows, dtype=np.float64))
    return features, Corpus(docs)


def generate(spec: SynthSpec) -> SynthDataset:
    """
    Generate a synthetic dataset.

    Args:
        spec: Dataset parameters.

    Returns:
        SynthDataset whose LabelSpace is already split with tail_count = n_tail.
    """
    spec.validate()
    rng = make_rng(spec.seed, STREAM_SYNTH_TRAIN)
    n_labels = spec.n_head + spec.n_tail
    centers = rng.normal(0.0, spec.center_scale, size=(n_labels, spec.d))

    diffs = centers[:, None, :] - centers[None, :, :]
    distances = np.sqrt((diffs ** 2).sum(axis=2)) + np.eye(n_labels)
    if np.any(distances == 0):
        raise ValidationError("generated label centers are not distinct; change the seed")

    features, corpus = _draw_split(rng, spec, centers, spec.docs_per_head, spec.docs_per_tail, "train")
    space = split_head_tail(build_label_space(corpus), spec.n_tail)

    test_features = test_corpus = None
    if spec.test_docs_per_label:
        test_rng = make_rng(spec.seed, STREAM_SYNTH_TEST)
        test_features, test_corpus = _draw_split(
            test_rng, spec, centers, spec.test_docs_per_label, spec.test_docs_per_label, "test"
        )

    logger.info(
        "Generated %d training documents (%d head x %d, %d tail x %d) in d=%d",
        len(corpus), spec.n_head, spec.docs_per_head, spec.n_tail, spec.docs_per_tail, spec.d,
    )
    return SynthDataset(
        spec=spec, centers=centers, features=features, corpus=corpus, space=space,
        test_features=test_features, test_corpus=test_corpus,
    )


def write_dataset(out_dir, dataset: SynthDataset, features_only: bool = False) -> dict:
    """
    Write train (and test) feature and labels files into out_dir.

    With features_only the labels files are skipped.

    Returns:
        dict mapping artifact name to written path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = [("train", dataset.features, dataset.corpus)]
    if dataset.test_features is not None:
        splits.append(("test", dataset.test_features, dataset.test_corpus))
    paths = {}
    for split, features, corpus in splits:
        paths[f"{split}_features"] = out / f"{split}.features"
        write_features(paths[f"{split}_features"], features)
        if not features_only:
            paths[f"{split}_corpus"] = out / f"{split}.labels"
            write_corpus(paths[f"{split}_corpus"], corpus)
    logger.info("Wrote synthetic dataset to %s", out)
    return {name: str(path) for name, path in paths.items()}

"""
Stage 2 classifier adjustment: retrain the tail rows of W_a on generated
instances and concatenate them with the frozen head rows.

Each tail row is an independent one-vs-rest logistic problem, warm-started
from its stage-1 value.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .corpus import Corpus, LabelSpace
from .errors import ShapeError, TrainingError, ValidationError
from .extractor import ClassifierWeights, bce_loss
from .generator import GeneratedSet
from .optim import Adam
from .seeding import STREAM_ADJUST, make_rng

logger = logging.getLogger(__name__)

NEGATIVE_POLICIES = ("balanced", "tail", "head")


@dataclass
class AdjustConfig:
    """
    Tail-row retraining settings.

    negative_policy decides where the negatives come from:
      - "balanced": half from other tail labels' generations, half from head documents
      - "tail": only other tail labels' generations
      - "head": only documents carrying a head label
    Negatives always match the positive count.
    """

    lr: float = 0.01
    epochs: int = 100
    seed: int = 0
    negative_policy: str = "balanced"
    include_real_shots: bool = True
    threshold: float = 0.5

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.negative_policy not in NEGATIVE_POLICIES:
            raise ValidationError(
                f"negative_policy must be one of {', '.join(NEGATIVE_POLICIES)}, got {self.negative_policy!r}"
            )
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError(f"threshold must be in (0, 1), got {self.threshold}")


def concat(W_head: np.ndarray, W_tail: np.ndarray) -> ClassifierWeights:
    """Stack head rows over tail rows."""
    W_head = np.asarray(W_head, dtype=np.float64)
    W_tail = np.asarray(W_tail, dtype=np.float64)
    if W_head.ndim != 2 or W_tail.ndim != 2 or W_head.shape[1] != W_tail.shape[1]:
        raise ShapeError(f"cannot concatenate head rows {W_head.shape} with tail rows {W_tail.shape}")
    return ClassifierWeights(W_a=np.vstack([W_head, W_tail]), n_head=W_head.shape[0])


def _sample(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    if count == 0:
        return pool[:0]
    return pool[rng.choice(len(pool), size=count, replace=len(pool) < count)]


def _negatives(rng: np.random.Generator, count: int, tail_pool: np.ndarray, head_pool: np.ndarray,
               policy: str) -> np.ndarray:
    if policy == "balanced":
        n_tail = math.ceil(count / 2)
    elif policy == "tail":
        n_tail = count
    else:
        n_tail = 0
    if len(tail_pool) == 0:
        n_tail = 0
    if len(head_pool) == 0:
        n_tail = count
    if n_tail and len(tail_pool) == 0:
        raise ValidationError("no negatives available: one tail label and no head documents")
    return np.vstack([_sample(rng, tail_pool, n_tail), _sample(rng, head_pool, count - n_tail)])


def _fit_row(w: np.ndarray, X: np.ndarray, y: np.ndarray, config: AdjustConfig, label: str) -> list:
    """Full-batch Adam on one row; history[e] is the mean BCE before epoch e + 1, plus the final value."""
    opt = Adam({"w": w}, lr=config.lr)
    history = []
    for epoch in range(1, config.epochs + 1):
        logits = X @ w
        loss = bce_loss(logits, y) / len(y)
        if not np.isfinite(loss):
            raise TrainingError(f"adjust loss for {label!r} became non-finite", epoch=epoch)
        history.append(loss)
        opt.step({"w": (expit(logits) - y) @ X / len(y)})
    history.append(bce_loss(X @ w, y) / len(y))
    return history


def adjust(cls: ClassifierWeights, generated: GeneratedSet, representations: np.ndarray, corpus: Corpus,
           space: LabelSpace, config: Optional[AdjustConfig] = None, workers: int = 1) -> tuple:
    """
    Retrain every tail row of cls on generated (and real few-shot) instances.

    Args:
        cls: Stage-1 classifier in head ++ tail order.
        generated: Generations for every tail label of space.
        representations: (N, d) training representations in corpus order.
        corpus: Training corpus (real shots and head negatives).
        space: Label space matching cls.
        config: Adjustment settings.
        workers: Rows trained concurrently.

    Returns:
        (adjusted ClassifierWeights, {tail label: per-epoch mean BCE})
    """
    config = config or AdjustConfig()
    config.validate()
    R = np.asarray(representations, dtype=np.float64)
    if cls.W_a.shape[0] != len(space) or cls.n_head != space.head_count:
        raise ShapeError(f"classifier with {cls.W_a.shape[0]} rows does not match the label space")
    if R.shape != (len(corpus), cls.W_a.shape[1]) or generated.dim != cls.W_a.shape[1]:
        raise ShapeError("representations, generations and classifier disagree on shape")
    if len(generated) == 0:
        raise ValidationError("generated set is empty")

    positives = {label: generated.for_label(label) for label in space.tail}
    head_rows = set()
    for head in space.head:
        head_rows.update(corpus.positions_with_label(head))

    def run(t: int) -> tuple:
        label = space.tail[t]
        pos = positives[label]
        if config.include_real_shots:
            pos = np.vstack([pos, R[corpus.positions_with_label(label)]])
        others = [positives[other] for other in space.tail if other != label]
        tail_pool = np.vstack(others) if others else np.zeros((0, R.shape[1]))
        own = set(corpus.positions_with_label(label))
        head_pool = R[sorted(head_rows - own)]
        neg = _negatives(make_rng(config.seed, STREAM_ADJUST, t), len(pos), tail_pool, head_pool,
                         config.negative_policy)
        X = np.vstack([pos, neg])
        y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        w = cls.W_tail[t].copy()
        return w, _fit_row(w, X, y, config, label)

    logger.info("Adjusting %d tail rows (policy=%s, real shots=%s)",
                space.tail_count, config.negative_policy, config.include_real_shots)
    if workers > 1 and space.tail_count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(space.tail_count)))
    else:
        results = [run(t) for t in range(space.tail_count)]

    W_tail = np.stack([w for w, _ in results]) if results else cls.W_tail.copy()
    histories = {label: hist for label, (_, hist) in zip(space.tail, results)}
    for label, hist in histories.items():
        if hist:
            logger.debug("adjust %s: BCE %.6f -> %.6f", label, hist[0], hist[-1])
    return concat(cls.W_head.copy(), W_tail), histories

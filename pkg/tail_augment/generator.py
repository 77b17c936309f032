"""
Stage 2 core: tail prototypes, transferred generations and the transfer matrix.

A tail label's prototype o is the mean representation of a few of its
documents. Every head-label relation c is moved into the tail label's
neighbourhood as g = W (o + c). W is trained against three terms:

    L_gen = sum ||o - g||^2                           (stay near the prototype)
    L_div = -sum ||Q^T g - mean_z Q^T g||^2           (spread inside span(Q))
    L_var = sum ||Q Q^T g - g||^2                     (stay inside span(Q))

with L_transfer = alpha L_gen + beta L_var + gamma L_div. The L_div mean is
taken over the relations z of one (tail label, head label) group.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .corpus import Corpus, FeatureFile, LabelSpace
from .errors import ShapeError, TrainingError, ValidationError
from .optim import Adam
from .relations import RelationSet
from .seeding import STREAM_PROTOTYPES, STREAM_SUBSET, make_rng

logger = logging.getLogger(__name__)

DEFAULT_SHOTS = 5


@dataclass
class TransferConfig:
    """Weights and optimisation settings for the transfer matrix."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    lr: float = 0.01
    epochs: int = 300
    seed: int = 0
    q: int = DEFAULT_SHOTS
    per_label: bool = False
    relation_subset: Optional[int] = None

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.q < 1:
            raise ValidationError(f"q must be >= 1, got {self.q}")
        if self.relation_subset is not None and self.relation_subset < 1:
            raise ValidationError(f"relation_subset must be >= 1, got {self.relation_subset}")


@dataclass(eq=False)
class Prototype:
    label: str
    o: np.ndarray
    q_used: int
    doc_ids: tuple = ()


@dataclass(eq=False)
class TransferMatrix:
    """Shared W (d x d) or, with per-label training, one W per tail label (T x d x d)."""

    W: np.ndarray
    init_spec: str = "identity"

    @property
    def per_label(self) -> bool:
        return self.W.ndim == 3

    @property
    def dim(self) -> int:
        return self.W.shape[-1]

    def for_label(self, t: int) -> np.ndarray:
        return self.W[t] if self.per_label else self.W

    @classmethod
    def identity(cls, d: int, n_tail: int = 0, per_label: bool = False) -> "TransferMatrix":
        if per_label:
            return cls(W=np.tile(np.eye(d), (n_tail, 1, 1)), init_spec="identity")
        return cls(W=np.eye(d), init_spec="identity")


@dataclass(eq=False)
class GeneratedSet:
    """
    Generations g[t, b, k] for tail label tails[t], head label heads[b].

    relation_index[b, k] is the relation z (within head b) behind column k;
    it is arange(p) on every row when all relations were used.
    """

    tails: tuple
    heads: tuple
    vectors: np.ndarray
    relation_index: np.ndarray

    def __len__(self) -> int:
        return int(np.prod(self.vectors.shape[:3]))

    @property
    def dim(self) -> int:
        return self.vectors.shape[3]

    def for_label(self, label: str) -> np.ndarray:
        """All generations of one tail label as (l_head * k, d) rows."""
        try:
            t = self.tails.index(label)
        except ValueError:
            raise ValidationError(f"tail label {label!r} has no generations") from None
        return self.vectors[t].reshape(-1, self.dim)

    def provenance(self) -> list:
        """(tail label, head label, relation z) for every generation, in storage order."""
        out = []
        for tail in self.tails:
            for b, head in enumerate(self.heads):
                for z in self.relation_index[b]:
                    out.append((tail, head, int(z)))
        return out

    def to_feature_file(self) -> FeatureFile:
        ids = tuple(f"gen:{tail}:{head}:{z}" for tail, head, z in self.provenance())
        return FeatureFile(ids=ids, matrix=self.vectors.reshape(-1, self.dim).copy())


@dataclass
class LossBreakdown:
    gen: float
    div: float
    var: float
    total: float
    count: int

    def per_instance(self) -> Dict[str, float]:
        n = max(self.count, 1)
        return {"gen": self.gen / n, "div": self.div / n, "var": self.var / n, "total": self.total / n}


# ---------------------------------------------------------------------------
# Prototypes
# ---------------------------------------------------------------------------

def prototype(representations: np.ndarray, corpus: Corpus, label: str, q: int, seed: int,
              index: int = 0) -> Prototype:
    """
    Mean of min(q, available) documents of one label, sampled without replacement.

    Args:
        index: Substream index, normally the label's position among the tail labels.
    """
    if q < 1:
        raise ValidationError(f"q must be >= 1, got {q}")
    R = np.asarray(representations, dtype=np.float64)
    pool = np.array(corpus.positions_with_label(label), dtype=np.int64)
    if len(pool) == 0:
        raise ValidationError(f"label {label!r} has no documents to build a prototype from")
    rng = make_rng(seed, STREAM_PROTOTYPES, index)
    chosen = np.sort(rng.choice(pool, size=min(q, len(pool)), replace=False))
    ids = corpus.ids
    return Prototype(label=label, o=R[chosen].mean(axis=0), q_used=len(chosen),
                     doc_ids=tuple(ids[i] for i in chosen))


def tail_prototypes(representations: np.ndarray, corpus: Corpus, space: LabelSpace, q: int,
                    seed: int) -> List[Prototype]:
    """One prototype per tail label, in tail order."""
    protos = [prototype(representations, corpus, label, q, seed, index=t) for t, label in enumerate(space.tail)]
    logger.info("Built %d tail prototypes (q=%d)", len(protos), q)
    return protos


# ---------------------------------------------------------------------------
# Generation and losses
# ---------------------------------------------------------------------------

def choose_subset(relations: RelationSet, k: Optional[int], seed: int) -> np.ndarray:
    """(l_head, k) relation indices per head label; all of them when k is None."""
    n_heads, p = relations.vectors.shape[:2]
    if k is None or k >= p:
        return np.tile(np.arange(p), (n_heads, 1))
    rows = [np.sort(make_rng(seed, STREAM_SUBSET, b).choice(p, size=k, replace=False)) for b in range(n_heads)]
    return np.stack(rows)


def _relation_block(relations: RelationSet, subset: Optional[np.ndarray]) -> np.ndarray:
    if relations.vectors.size == 0 or relations.p == 0:
        raise ValidationError("relation set is empty")
    if subset is None:
        return relations.vectors
    return np.take_along_axis(relations.vectors, subset[:, :, None], axis=1)


def _check(W: TransferMatrix, prototypes: Sequence[Prototype], relations: RelationSet, Q=None) -> None:
    if not prototypes:
        raise ValidationError("no tail prototypes")
    d = relations.dim
    if W.dim != d or any(proto.o.shape != (d,) for proto in prototypes):
        raise ShapeError(f"transfer matrix, prototypes and relations disagree on dimension {d}")
    if W.per_label and W.W.shape[0] != len(prototypes):
        raise ShapeError(f"{W.W.shape[0]} per-label matrices for {len(prototypes)} tail labels")
    if Q is not None and Q.shape[0] != d:
        raise ShapeError(f"eigenbasis rows {Q.shape[0]} do not match dimension {d}")


def generate(W: TransferMatrix, prototypes: Sequence[Prototype], relations: RelationSet,
             subset: Optional[np.ndarray] = None) -> GeneratedSet:
    """g[t, b, k] = W_t (o_t + c[b, subset[b, k]])."""
    _check(W, prototypes, relations)
    C = _relation_block(relations, subset)
    out = np.empty((len(prototypes),) + C.shape, dtype=np.float64)
    for t, proto in enumerate(prototypes):
        out[t] = (proto.o + C) @ W.for_label(t).T
    if subset is None:
        subset = np.tile(np.arange(relations.p), (len(relations.heads), 1))
    logger.info("Generated %d instances for %d tail labels", out[..., 0].size, len(prototypes))
    return GeneratedSet(tails=tuple(proto.label for proto in prototypes), heads=relations.heads,
                        vectors=out, relation_index=np.asarray(subset, dtype=np.int64))


def _label_terms(Wt: np.ndarray, o: np.ndarray, C: np.ndarray, Q: np.ndarray, config: TransferConfig,
                 with_grad: bool) -> tuple:
    """Loss terms of one tail label over all its (b, k) generations, and dL/dW_t."""
    U = o + C                                   # (B, P, d)
    G = U @ Wt.T
    proj = G @ Q                                # (B, P, m)
    dev = proj - proj.mean(axis=1, keepdims=True)
    res = G - proj @ Q.T
    diff = G - o
    terms = (float((diff * diff).sum()), -float((dev * dev).sum()), float((res * res).sum()))
    if not with_grad:
        return terms, None
    dG = 2.0 * config.alpha * diff + 2.0 * config.beta * res - 2.0 * config.gamma * (dev @ Q.T)
    return terms, np.einsum("bpd,bpe->de", dG, U)


def _evaluate(W: TransferMatrix, prototypes: Sequence[Prototype], C: np.ndarray, Q: np.ndarray,
              config: TransferConfig, with_grad: bool, workers: int = 1) -> tuple:
    def run(t: int) -> tuple:
        return _label_terms(W.for_label(t), prototypes[t].o, C, Q, config, with_grad)

    if workers > 1 and len(prototypes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(prototypes))))
    else:
        parts = [run(t) for t in range(len(prototypes))]

    gen = sum(part[0][0] for part in parts)
    div = sum(part[0][1] for part in parts)
    var = sum(part[0][2] for part in parts)
    total = config.alpha * gen + config.beta * var + config.gamma * div
    breakdown = LossBreakdown(gen=gen, div=div, var=var, total=total, count=len(prototypes) * C.shape[0] * C.shape[1])
    if not with_grad:
        return breakdown, None
    if W.per_label:
        grad = np.stack([part[1] for part in parts])
    else:
        grad = np.zeros_like(W.W)
        for part in parts:
            grad += part[1]
    return breakdown, grad


def losses(W: TransferMatrix, prototypes: Sequence[Prototype], relations: RelationSet, Q: np.ndarray,
           config: Optional[TransferConfig] = None, subset: Optional[np.ndarray] = None) -> LossBreakdown:
    """L_gen, L_div, L_var and the weighted L_transfer over every generation."""
    config = config or TransferConfig()
    Q = np.asarray(Q, dtype=np.float64)
    _check(W, prototypes, relations, Q)
    return _evaluate(W, prototypes, _relation_block(relations, subset), Q, config, with_grad=False)[0]


def grad_W(W: TransferMatrix, prototypes: Sequence[Prototype], relations: RelationSet, Q: np.ndarray,
           config: Optional[TransferConfig] = None, subset: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Analytic gradient of L_transfer with respect to W.

    With u = o + c, g = W u, P = Q Q^T and dev the centred projection of a group:
    dL/dg = 2 alpha (g - o) + 2 beta (I - P) g - 2 gamma Q dev, and dL/dW = sum dL/dg u^T.
    """
    config = config or TransferConfig()
    Q = np.asarray(Q, dtype=np.float64)
    _check(W, prototypes, relations, Q)
    return _evaluate(W, prototypes, _relation_block(relations, subset), Q, config, with_grad=True)[1]


def train_W(prototypes: Sequence[Prototype], relations: RelationSet, Q: np.ndarray,
            config: TransferConfig, subset: Optional[np.ndarray] = None, workers: int = 1) -> tuple:
    """
    Full-batch Adam on L_transfer starting from W = I.

    The returned matrix is the lowest-loss iterate seen, the identity
    included, so its L_transfer never exceeds the initial value.

    Returns:
        (TransferMatrix, history) where history maps "gen", "div", "var" and
        "total" to per-epoch values of the iterates; entry 0 is the loss at
        initialisation.
    """
    config.validate()
    Q = np.asarray(Q, dtype=np.float64)
    W = TransferMatrix.identity(relations.dim, len(prototypes), per_label=config.per_label)
    _check(W, prototypes, relations, Q)
    C = _relation_block(relations, subset)
    opt = Adam({"W": W.W}, lr=config.lr)
    history: Dict[str, list] = {"gen": [], "div": [], "var": [], "total": []}
    best = {"W": W.W.copy(), "total": np.inf, "epoch": 0}

    def record(breakdown: LossBreakdown, epoch: int) -> None:
        if not np.isfinite(breakdown.total):
            raise TrainingError("transfer loss became non-finite", epoch=epoch)
        for key in history:
            history[key].append(getattr(breakdown, key))
        if breakdown.total < best["total"]:
            best.update(W=W.W.copy(), total=breakdown.total, epoch=epoch - 1)

    logger.info(
        "Training transfer matrix on %d tail x %d head x %d relations (alpha=%g beta=%g gamma=%g)",
        len(prototypes), C.shape[0], C.shape[1], config.alpha, config.beta, config.gamma,
    )
    for epoch in range(1, config.epochs + 1):
        breakdown, grad = _evaluate(W, prototypes, C, Q, config, with_grad=True, workers=workers)
        record(breakdown, epoch)
        opt.step({"W": grad})
        logger.debug("transfer epoch %d: total %.6f gen %.6f div %.6f var %.6f",
                     epoch, breakdown.total, breakdown.gen, breakdown.div, breakdown.var)
    record(_evaluate(W, prototypes, C, Q, config, with_grad=False)[0], config.epochs + 1)

    if best["epoch"] < config.epochs:
        logger.warning("Transfer loss ended at %.6f; keeping the step-%d matrix (%.6f)",
                       history["total"][-1], best["epoch"], best["total"])
    logger.info("Transfer loss %.6f -> %.6f", history["total"][0], best["total"])
    return TransferMatrix(W=best["W"]), history

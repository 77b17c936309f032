"""
Stage 1: multi-head attention document representation and the sigmoid
multi-label classifier, trained jointly with binary cross-entropy.

The context matrix is the document's word-embedding matrix (no recurrent
encoder). For one document with valid-token embeddings H (e x n):

    A = softmax(W2 tanh(W1 H))        (s x n, padding masked out)
    M = A H^T                         (s x e)
    r = P_agg mean_rows(M)            (d)
    y_hat = sigmoid(W_a r)            (l)

Gradients are derived by hand; see backward().
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.special import expit, log_expit

from .corpus import Corpus, EmbeddingTable, FeatureFile, LabelSpace
from .errors import ShapeError, StateError, TrainingError, ValidationError
from .optim import Adam
from .seeding import STREAM_INIT, STREAM_SHUFFLE, make_rng

logger = logging.getLogger(__name__)

DEFAULT_ATTENTION_DIM = 100
DEFAULT_HEADS = 4
DEFAULT_REPR_DIM = 100
EARLY_STOP_PATIENCE = 3
REPRESENT_CHUNK = 256


@dataclass
class TrainConfig:
    """Stage-1 optimisation and architecture settings."""

    lr: float = 0.01
    epochs: int = 10
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    early_stop_tol: float = 1e-4
    freeze_embeddings: bool = True
    heads: int = DEFAULT_HEADS
    attention_dim: int = DEFAULT_ATTENTION_DIM
    repr_dim: int = DEFAULT_REPR_DIM

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("heads", "attention_dim", "repr_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (rows + cols)), size=(rows, cols))


class AttentionExtractor:
    """Multi-head attention pooling over an embedding matrix."""

    def __init__(self, embeddings: np.ndarray, W1: np.ndarray, W2: np.ndarray, P_agg: np.ndarray,
                 freeze_embeddings: bool = True):
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        self.W1 = np.asarray(W1, dtype=np.float64)
        self.W2 = np.asarray(W2, dtype=np.float64)
        self.P_agg = np.asarray(P_agg, dtype=np.float64)
        self.freeze_embeddings = freeze_embeddings
        self._check_shapes()

    def _check_shapes(self):
        e = self.embeddings.shape[1]
        da, e1 = self.W1.shape
        s, da2 = self.W2.shape
        d, e2 = self.P_agg.shape
        if e1 != e or e2 != e:
            raise ShapeError(f"W1 {self.W1.shape} / P_agg {self.P_agg.shape} do not match embedding dim {e}")
        if da2 != da:
            raise ShapeError(f"W2 {self.W2.shape} does not match attention dim {da}")
        if min(s, da, d) < 1:
            raise ShapeError("heads, attention dim and representation dim must be >= 1")

    @classmethod
    def initialize(cls, embeddings: np.ndarray, heads: int, attention_dim: int, repr_dim: int,
                   rng: np.random.Generator, freeze_embeddings: bool = True) -> "AttentionExtractor":
        e = embeddings.shape[1]
        return cls(
            embeddings=np.array(embeddings, dtype=np.float64),
            W1=_xavier(rng, attention_dim, e),
            W2=_xavier(rng, heads, attention_dim),
            P_agg=_xavier(rng, repr_dim, e),
            freeze_embeddings=freeze_embeddings,
        )

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def heads(self) -> int:
        return self.W2.shape[0]

    @property
    def repr_dim(self) -> int:
        return self.P_agg.shape[0]

    @property
    def oov_row(self) -> int:
        return self.embeddings.shape[0] - 1

    def params(self) -> Dict[str, np.ndarray]:
        params = {"W1": self.W1, "W2": self.W2, "P_agg": self.P_agg}
        if not self.freeze_embeddings:
            params["embeddings"] = self.embeddings
        return params


@dataclass(eq=False)
class ClassifierWeights:
    """W_a with rows ordered head ++ tail; the first n_head rows are W_head."""

    W_a: np.ndarray
    n_head: int

    def __post_init__(self):
        self.W_a = np.asarray(self.W_a, dtype=np.float64)
        if self.W_a.ndim != 2 or not 0 <= self.n_head <= self.W_a.shape[0]:
            raise ShapeError(f"bad classifier shape {self.W_a.shape} with n_head={self.n_head}")

    @property
    def W_head(self) -> np.ndarray:
        return self.W_a[: self.n_head]

    @property
    def W_tail(self) -> np.ndarray:
        return self.W_a[self.n_head:]

    @classmethod
    def from_label_order(cls, W: np.ndarray, space: LabelSpace) -> "ClassifierWeights":
        """Reorder rows trained in first-appearance order into head ++ tail order."""
        if W.shape[0] != len(space.labels):
            raise ShapeError(f"{W.shape[0]} classifier rows for {len(space.labels)} labels")
        return cls(W_a=W[space.appearance_permutation()], n_head=space.head_count)

    def copy(self) -> "ClassifierWeights":
        return ClassifierWeights(W_a=self.W_a.copy(), n_head=self.n_head)


# ---------------------------------------------------------------------------
# Forward / loss / backward
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ForwardCache:
    """Intermediates of a batched forward pass."""

    ids: np.ndarray
    mask: np.ndarray
    X: np.ndarray
    T: np.ndarray
    A: np.ndarray
    mbar: np.ndarray
    R: np.ndarray


def pad_batch(index_lists: Sequence[np.ndarray], pad_index: int) -> tuple:
    """Right-pad token index arrays to a common length; returns (ids, mask)."""
    width = max((len(ix) for ix in index_lists), default=0)
    width = max(width, 1)
    ids = np.full((len(index_lists), width), pad_index, dtype=np.int64)
    mask = np.zeros((len(index_lists), width), dtype=bool)
    for i, ix in enumerate(index_lists):
        ids[i, : len(ix)] = ix
        mask[i, : len(ix)] = True
    return ids, mask


def forward_batch(ex: AttentionExtractor, ids: np.ndarray, mask: np.ndarray) -> tuple:
    """
    Representations for a padded batch.

    Args:
        ex: The extractor.
        ids: (B, n) embedding row indices.
        mask: (B, n) True on real tokens.

    Returns:
        (R of shape (B, d), ForwardCache)
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if ids.shape != mask.shape or ids.ndim != 2:
        raise ShapeError(f"ids {ids.shape} and mask {mask.shape} must be equal 2-d shapes")
    empty = ~mask.any(axis=1)
    if empty.any():
        raise ValidationError(f"{int(empty.sum())} document(s) have no non-padding tokens; cannot represent")

    X = ex.embeddings[ids]                       # (B, n, e)
    T = np.tanh(X @ ex.W1.T)                     # (B, n, da)
    S = np.swapaxes(T @ ex.W2.T, 1, 2)           # (B, s, n)
    S = np.where(mask[:, None, :], S, -np.inf)
    E = np.exp(S - S.max(axis=2, keepdims=True))
    A = E / E.sum(axis=2, keepdims=True)
    M = A @ X                                    # (B, s, e)
    mbar = M.mean(axis=1)                        # (B, e)
    R = mbar @ ex.P_agg.T                        # (B, d)
    return R, ForwardCache(ids=ids, mask=mask, X=X, T=T, A=A, mbar=mbar, R=R)


def forward(ex: AttentionExtractor, token_ids: np.ndarray, mask: Optional[np.ndarray] = None) -> tuple:
    """Representation r (length d) of one document, plus its cache."""
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if mask is None:
        mask = np.ones(token_ids.shape, dtype=bool)
    R, cache = forward_batch(ex, token_ids[None, :], np.asarray(mask, dtype=bool)[None, :])
    return R[0], cache


def predict(cls: Union[ClassifierWeights, np.ndarray], r: np.ndarray) -> np.ndarray:
    """Label probabilities sigmoid(W_a r) for one vector or a (B, d) batch."""
    W = cls.W_a if isinstance(cls, ClassifierWeights) else np.asarray(cls, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != W.shape[1]:
        raise ShapeError(f"representation dim {r.shape[-1]} does not match classifier dim {W.shape[1]}")
    return expit(r @ W.T)


def bce_loss(values: np.ndarray, targets: np.ndarray, from_logits: bool = True) -> float:
    """
    Summed binary cross-entropy.

    With from_logits the loss is evaluated as
    -[y log sigmoid(x) + (1 - y) log sigmoid(-x)], which stays finite for any
    finite logit.
    """
    values = np.asarray(values, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if values.shape != targets.shape:
        raise ShapeError(f"scores {values.shape} and targets {targets.shape} differ")
    if from_logits:
        return float(-(targets * log_expit(values) + (1.0 - targets) * log_expit(-values)).sum())
    probs = np.clip(values, np.finfo(np.float64).tiny, 1.0)
    complement = np.clip(1.0 - values, np.finfo(np.float64).tiny, 1.0)
    return float(-(targets * np.log(probs) + (1.0 - targets) * np.log(complement)).sum())


def backward(ex: AttentionExtractor, W_a: np.ndarray, cache: Optional[ForwardCache],
             targets: np.ndarray) -> Dict[str, Optional[np.ndarray]]:
    """
    Gradients of the summed batch BCE w.r.t. W1, W2, P_agg, W_a and (when not
    frozen) the embedding matrix.

    Args:
        ex: Extractor used for the forward pass.
        W_a: (l, d) classifier matrix, columns matching cache.R.
        cache: Output of forward_batch on the same parameters.
        targets: (B, l) targets; soft targets are accepted.
    """
    if cache is None:
        raise StateError("backward called without a forward cache")
    Y = np.asarray(targets, dtype=np.float64)
    X, T, A, mbar, R = cache.X, cache.T, cache.A, cache.mbar, cache.R
    if Y.shape != (R.shape[0], W_a.shape[0]):
        raise ShapeError(f"targets {Y.shape} do not match batch {R.shape[0]} x labels {W_a.shape[0]}")

    G = expit(R @ W_a.T) - Y                     # (B, l)
    dW_a = G.T @ R
    dR = G @ W_a                                 # (B, d)
    dP = dR.T @ mbar                             # (d, e)
    dmbar = dR @ ex.P_agg                        # (B, e)

    heads = A.shape[1]
    dM = np.repeat(dmbar[:, None, :] / heads, heads, axis=1)       # (B, s, e)
    dA = dM @ np.swapaxes(X, 1, 2)                                  # (B, s, n)
    dX = np.swapaxes(A, 1, 2) @ dM                                  # (B, n, e)
    dS = A * (dA - (dA * A).sum(axis=2, keepdims=True))             # softmax
    dS_t = np.swapaxes(dS, 1, 2)                                    # (B, n, s)
    dW2 = np.einsum("bns,bna->sa", dS_t, T)
    dZ = (dS_t @ ex.W2) * (1.0 - T * T)                             # (B, n, da)
    dW1 = np.einsum("bna,bne->ae", dZ, X)

    grads = {"W1": dW1, "W2": dW2, "P_agg": dP, "W_a": dW_a, "embeddings": None}
    if not ex.freeze_embeddings:
        dX = dX + dZ @ ex.W1
        dE = np.zeros_like(ex.embeddings)
        np.add.at(dE, cache.ids[cache.mask], dX[cache.mask])
        dE[ex.oov_row] = 0.0
        grads["embeddings"] = dE
    return grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _converged(history: List[float], tol: float) -> bool:
    """True once the relative loss change stayed below tol for the last few epochs."""
    if tol <= 0 or len(history) <= EARLY_STOP_PATIENCE:
        return False
    recent = history[-(EARLY_STOP_PATIENCE + 1):]
    for prev, cur in zip(recent, recent[1:]):
        if abs(prev - cur) >= tol * max(abs(prev), np.finfo(np.float64).tiny):
            return False
    return True


def _run_epochs(params: Dict[str, np.ndarray], n: int, step: Callable[[np.ndarray], tuple],
                config: TrainConfig, what: str) -> List[float]:
    opt = Adam(params, lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)
    rng = make_rng(config.seed, STREAM_SHUFFLE)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            loss, grads = step(order[start:start + config.batch_size])
            if not np.isfinite(loss):
                raise TrainingError(f"{what} loss became non-finite", epoch=epoch)
            total += loss
            opt.step(grads)
        history.append(total / n)
        logger.debug("%s epoch %d: mean loss %.6f", what, epoch, history[-1])
        if _converged(history, config.early_stop_tol):
            logger.info("%s converged after %d epochs (loss %.6f)", what, epoch, history[-1])
            break
    return history


def index_corpus(corpus: Corpus, table: EmbeddingTable) -> List[np.ndarray]:
    """Embedding row indices for every document (OOV tokens -> zero row)."""
    return [table.token_indices(doc.tokens) for doc in corpus]


def train_stage1(corpus: Corpus, table: EmbeddingTable, space: LabelSpace, config: TrainConfig) -> tuple:
    """
    Train the attention extractor and the full classifier jointly.

    Returns:
        (AttentionExtractor, ClassifierWeights in head ++ tail order, per-epoch mean loss)
    """
    config.validate()
    if len(corpus) == 0:
        raise ValidationError("cannot train on an empty corpus")
    indices = index_corpus(corpus, table)
    empty = [doc.id for doc, ix in zip(corpus, indices) if len(ix) == 0]
    if empty:
        raise ValidationError(f"{len(empty)} training documents have no tokens (first: {empty[0]!r})")

    Y = corpus.targets(space.labels)
    init_rng = make_rng(config.seed, STREAM_INIT)
    ex = AttentionExtractor.initialize(
        table.matrix_with_oov(), config.heads, config.attention_dim, config.repr_dim,
        init_rng, freeze_embeddings=config.freeze_embeddings,
    )
    W_a = _xavier(init_rng, len(space.labels), config.repr_dim)
    params = dict(ex.params())
    params["W_a"] = W_a

    def step(batch: np.ndarray) -> tuple:
        ids, mask = pad_batch([indices[i] for i in batch], ex.oov_row)
        R, cache = forward_batch(ex, ids, mask)
        loss = bce_loss(R @ W_a.T, Y[batch])
        return loss, backward(ex, W_a, cache, Y[batch])

    logger.info(
        "Training stage 1 on %d documents, %d labels (e=%d, da=%d, s=%d, d=%d)",
        len(corpus), len(space.labels), ex.embedding_dim, config.attention_dim, config.heads, config.repr_dim,
    )
    history = _run_epochs(params, len(corpus), step, config, "stage-1")
    return ex, ClassifierWeights.from_label_order(W_a, space), history


def train_classifier(features: np.ndarray, targets: np.ndarray, space: LabelSpace, config: TrainConfig) -> tuple:
    """
    Stage 1 with fixed representations: train only W_a.

    Args:
        features: (N, d) representations in corpus order.
        targets: (N, l) targets in first-appearance label order.

    Returns:
        (ClassifierWeights in head ++ tail order, per-epoch mean loss)
    """
    config.validate()
    R = np.asarray(features, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if R.shape[0] == 0:
        raise ValidationError("cannot train on an empty corpus")
    if Y.shape != (R.shape[0], len(space.labels)):
        raise ShapeError(f"targets {Y.shape} do not match {R.shape[0]} documents x {len(space.labels)} labels")
    W_a = _xavier(make_rng(config.seed, STREAM_INIT), len(space.labels), R.shape[1])

    def step(batch: np.ndarray) -> tuple:
        Rb, Yb = R[batch], Y[batch]
        logits = Rb @ W_a.T
        return bce_loss(logits, Yb), {"W_a": (expit(logits) - Yb).T @ Rb}

    logger.info("Training stage-1 classifier on %d fixed representations of dim %d", R.shape[0], R.shape[1])
    history = _run_epochs({"W_a": W_a}, R.shape[0], step, config, "stage-1")
    return ClassifierWeights.from_label_order(W_a, space), history


def represent_all(source: Union[AttentionExtractor, FeatureFile], corpus: Corpus,
                  table: Optional[EmbeddingTable] = None, workers: int = 1) -> np.ndarray:
    """
    One representation per document, rows in corpus order.

    A FeatureFile is used verbatim. With an extractor, documents are processed
    in fixed chunks; workers only changes how many chunks run at once.
    """
    if isinstance(source, FeatureFile):
        return source.rows(corpus.ids).copy()
    if table is None:
        raise ValidationError("an embedding table is required to represent documents with the extractor")
    ex = source
    indices = index_corpus(corpus, table)
    chunks = [indices[i:i + REPRESENT_CHUNK] for i in range(0, len(indices), REPRESENT_CHUNK)]

    def run(chunk: List[np.ndarray]) -> np.ndarray:
        ids, mask = pad_batch(chunk, ex.oov_row)
        return forward_batch(ex, ids, mask)[0]

    if not chunks:
        return np.zeros((0, ex.repr_dim), dtype=np.float64)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]
    return np.vstack(parts)

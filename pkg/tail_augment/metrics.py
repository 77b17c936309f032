"""
Evaluation metrics and the run-level significance test.

Ranking metrics (P@k, nDCG@k) break score ties by the lower label index.
F1 scores use the zero convention: an undefined precision or recall counts
as 0, and so does F1 when both are 0.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.special import betainc

from .corpus import LabelSpace
from .errors import ParseError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

RANK_KS = (1, 3, 5)
DEFAULT_THRESHOLD = 0.5


def _ranking(scores: np.ndarray, truth: np.ndarray, k: int) -> tuple:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 1 or scores.shape != truth.shape:
        raise ShapeError(f"scores {scores.shape} and truth {truth.shape} must be equal-length vectors")
    if not 1 <= k <= len(scores):
        raise ValidationError(f"k must be in [1, {len(scores)}], got {k}")
    top = np.argsort(-scores, kind="stable")[:k]
    return top, (truth > 0)


def precision_at_k(scores: np.ndarray, truth: np.ndarray, k: int) -> float:
    """Fraction of the k highest-scoring labels that are relevant."""
    top, relevant = _ranking(scores, truth, k)
    return float(relevant[top].sum()) / k


def ndcg_at_k(scores: np.ndarray, truth: np.ndarray, k: int) -> float:
    """
    DCG@k over log2(rank + 1) discounts, normalised by the ideal DCG with
    min(k, number of relevant labels) terms. 0 when nothing is relevant.
    """
    top, relevant = _ranking(scores, truth, k)
    n_relevant = int(relevant.sum())
    if n_relevant == 0:
        return 0.0
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float((relevant[top] * discounts).sum())
    ideal = float(discounts[: min(k, n_relevant)].sum())
    return dcg / ideal


def _confusion(predictions: np.ndarray, truth: np.ndarray) -> tuple:
    P = np.asarray(predictions) > 0
    Y = np.asarray(truth) > 0
    if P.shape != Y.shape or P.ndim != 2:
        raise ShapeError(f"predictions {P.shape} and truth {Y.shape} must be equal-shape matrices")
    tp = (P & Y).sum(axis=0).astype(np.float64)
    fp = (P & ~Y).sum(axis=0).astype(np.float64)
    fn = (~P & Y).sum(axis=0).astype(np.float64)
    return tp, fp, fn


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_label_scores(predictions: np.ndarray, truth: np.ndarray) -> tuple:
    """(precision, recall, f1, support) arrays, one entry per label."""
    tp, fp, fn = _confusion(predictions, truth)
    precision = _safe_ratio(tp, tp + fp)
    recall = _safe_ratio(tp, tp + fn)
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    return precision, recall, f1, (tp + fn).astype(np.int64)


def macro_f1(predictions: np.ndarray, truth: np.ndarray, labels: Optional[Sequence[int]] = None) -> float:
    """Unweighted mean F1 over the label columns in labels (all columns by default)."""
    f1 = per_label_scores(predictions, truth)[2]
    subset = np.arange(f1.shape[0]) if labels is None else np.asarray(labels, dtype=np.int64)
    if subset.size == 0:
        raise ValidationError("macro-F1 needs a non-empty label subset")
    return float(f1[subset].mean())


def micro_f1(predictions: np.ndarray, truth: np.ndarray) -> float:
    tp, fp, fn = (part.sum() for part in _confusion(predictions, truth))
    den = 2.0 * tp + fp + fn
    return float(2.0 * tp / den) if den > 0 else 0.0


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------

class TTestResult(NamedTuple):
    t: float
    df: int
    p: float


def pooled_ttest(runs_a: Sequence[float], runs_b: Sequence[float]) -> TTestResult:
    """
    Two-sample Student t-test with pooled variance, two-tailed.

    p = I_{df / (df + t^2)}(df / 2, 1 / 2), the regularised incomplete beta
    form of the t distribution tail.
    """
    a = np.asarray(runs_a, dtype=np.float64)
    b = np.asarray(runs_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) < 2 or len(b) < 2:
        raise ValidationError(f"each group needs at least 2 values, got {a.size} and {b.size}")
    df = len(a) + len(b) - 2
    pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / df
    se = np.sqrt(pooled * (1.0 / len(a) + 1.0 / len(b)))
    diff = a.mean() - b.mean()
    if se == 0.0:
        if diff == 0.0:
            return TTestResult(t=0.0, df=df, p=1.0)
        return TTestResult(t=float(np.copysign(np.inf, diff)), df=df, p=0.0)
    t = float(diff / se)
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, df=df, p=min(max(p, 0.0), 1.0))


def read_runs(path: Union[str, Path]) -> List[float]:
    """One value per line; blank lines and # comments are skipped."""
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ParseError(f"not a number: {line!r}", path=str(path), line=line_no) from None
    logger.debug("Read %d run values from %s", len(values), path)
    return values


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Ranking and F1 metrics for one scored test set."""

    p_at_k: Dict[int, float]
    ndcg_at_k: Dict[int, float]
    macro_f1: float
    tail_macro_f1: Optional[float]
    head_macro_f1: Optional[float]
    micro_f1: float
    per_label: List[dict]
    n_documents: int
    skipped_documents: int
    zero_support: List[str] = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "ranking": {
                **{f"p@{k}": v for k, v in self.p_at_k.items()},
                **{f"ndcg@{k}": v for k, v in self.ndcg_at_k.items()},
            },
            "f1": {
                "macro": self.macro_f1,
                "tail_macro": self.tail_macro_f1,
                "head_macro": self.head_macro_f1,
                "micro": self.micro_f1,
                "threshold": self.threshold,
            },
            "per_label": self.per_label,
            "counts": {
                "documents": self.n_documents,
                "skipped_documents": self.skipped_documents,
                "zero_support_labels": list(self.zero_support),
            },
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def flat(self) -> Dict[str, float]:
        """Scalar metrics keyed as in the TSV output."""
        out = {f"p@{k}": v for k, v in self.p_at_k.items()}
        out.update({f"ndcg@{k}": v for k, v in self.ndcg_at_k.items()})
        out["macro_f1"] = self.macro_f1
        out["tail_macro_f1"] = self.tail_macro_f1
        out["head_macro_f1"] = self.head_macro_f1
        out["micro_f1"] = self.micro_f1
        out["documents"] = self.n_documents
        out["skipped_documents"] = self.skipped_documents
        return out

    def to_tsv(self) -> str:
        lines = []
        for key, value in self.flat().items():
            lines.append(f"{key}\t{'NA' if value is None else repr(value)}")
        for row in self.per_label:
            lines.append(f"label:{row['label']}\t{row['precision']!r}\t{row['recall']!r}\t{row['f1']!r}\t{row['support']}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        """Human-readable report."""
        lines = [f"=== EVALUATION ({self.n_documents} documents, threshold {self.threshold}) ===", ""]
        ranks = "  ".join(f"P@{k} {self.p_at_k[k]:.4f}" for k in self.p_at_k)
        ndcgs = "  ".join(f"nDCG@{k} {self.ndcg_at_k[k]:.4f}" for k in self.ndcg_at_k)
        lines.append(f"Ranking: {ranks}")
        lines.append(f"         {ndcgs}")
        lines.append("")
        lines.append(f"Macro-F1: {self.macro_f1:.4f}   Micro-F1: {self.micro_f1:.4f}")
        if self.tail_macro_f1 is not None:
            lines.append(f"  tail labels: {self.tail_macro_f1:.4f}")
        if self.head_macro_f1 is not None:
            lines.append(f"  head labels: {self.head_macro_f1:.4f}")
        if self.skipped_documents:
            lines.append(f"Skipped {self.skipped_documents} documents with no relevant labels in ranking metrics")
        if self.zero_support:
            shown = ", ".join(self.zero_support[:10])
            more = f" ... and {len(self.zero_support) - 10} more" if len(self.zero_support) > 10 else ""
            lines.append(f"Labels with no test documents (F1 counted as 0): {shown}{more}")
        return "\n".join(lines)


def evaluate(scores: np.ndarray, truth: np.ndarray, space: LabelSpace,
             threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    """
    Build an EvalReport.

    Args:
        scores: (N, l) sigmoid outputs, columns in head ++ tail order.
        truth: (N, l) binary targets in the same column order.
        space: Label space giving the column names and the head/tail split.
        threshold: Probability cutoff for F1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if scores.shape != truth.shape or scores.ndim != 2:
        raise ShapeError(f"scores {scores.shape} and truth {truth.shape} must be equal-shape matrices")
    if scores.shape[1] != len(space):
        raise ShapeError(f"{scores.shape[1]} score columns for {len(space)} labels")

    n_labels = scores.shape[1]
    ks = [k for k in RANK_KS if k <= n_labels]
    ranked = [i for i in range(scores.shape[0]) if truth[i].any()]
    skipped = scores.shape[0] - len(ranked)
    if skipped:
        logger.warning("%d documents have no relevant labels and are skipped in ranking metrics", skipped)
    p_at = {k: float(np.mean([precision_at_k(scores[i], truth[i], k) for i in ranked])) if ranked else 0.0 for k in ks}
    ndcg_at = {k: float(np.mean([ndcg_at_k(scores[i], truth[i], k) for i in ranked])) if ranked else 0.0 for k in ks}

    predictions = scores >= threshold
    precision, recall, f1, support = per_label_scores(predictions, truth)
    ordered = space.ordered
    head_idx = list(range(space.head_count))
    tail_idx = list(range(space.head_count, n_labels))
    zero_support = [ordered[i] for i in range(n_labels) if support[i] == 0]
    if zero_support:
        logger.warning("%d labels have no test documents; their F1 counts as 0", len(zero_support))

    per_label = [
        {
            "label": ordered[i],
            "group": "head" if i < space.head_count else "tail",
            "precision": float(precision[i]),
            "recall": float(recall[i]),
            "f1": float(f1[i]),
            "support": int(support[i]),
        }
        for i in range(n_labels)
    ]
    return EvalReport(
        p_at_k=p_at,
        ndcg_at_k=ndcg_at,
        macro_f1=float(f1.mean()) if n_labels else 0.0,
        tail_macro_f1=float(f1[tail_idx].mean()) if tail_idx else None,
        head_macro_f1=float(f1[head_idx].mean()) if head_idx else None,
        micro_f1=micro_f1(predictions, truth),
        per_label=per_label,
        n_documents=scores.shape[0],
        skipped_documents=skipped,
        zero_support=zero_support,
        threshold=threshold,
    )

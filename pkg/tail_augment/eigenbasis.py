"""
Head-label scatter matrix and its top eigenvectors.

The basis Q spans the directions in which head-label documents vary around
their label prototypes; generated tail instances are projected onto it.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import Corpus, LabelSpace
from .errors import NumericalError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_RANK = 100
JACOBI_MAX_DIM = 512
JACOBI_MAX_SWEEPS = 100
RESIDUAL_TOL = 1e-6


@dataclass(eq=False)
class EigenBasis:
    """Top-m orthonormal eigenvectors (columns of Q) and their eigenvalues."""

    Q: np.ndarray
    eigenvalues: np.ndarray
    explained_ratio: float

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        """Q Q^T x for a vector or the rows of a matrix."""
        return (x @ self.Q) @ self.Q.T


def scatter(representations: np.ndarray, corpus: Corpus, space: LabelSpace) -> np.ndarray:
    """
    Within-label scatter summed over head labels.

    A document carrying several head labels contributes once per label.
    Not normalised by counts.
    """
    R = np.asarray(representations, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != len(corpus):
        raise ShapeError(f"representations {R.shape} do not match {len(corpus)} documents")
    if not space.head:
        raise ValidationError("scatter needs at least one head label")
    d = R.shape[1]
    S = np.zeros((d, d), dtype=np.float64)
    for head in space.head:
        rows = corpus.positions_with_label(head)
        if not rows:
            raise ValidationError(f"head label {head!r} has no documents")
        centered = R[rows] - R[rows].mean(axis=0)
        S += centered.T @ centered
    return (S + S.T) / 2.0


def jacobi_eigh(S: np.ndarray, max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple:
    """
    Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns:
        (eigenvalues, eigenvectors as columns), unsorted.
    """
    A = np.array(S, dtype=np.float64)
    d = A.shape[0]
    V = np.eye(d)
    scale = np.linalg.norm(A)
    if d < 2 or scale == 0.0:
        return np.diag(A).copy(), V

    # Off-diagonal entries at rounding-noise level are zeroed instead of rotated.
    threshold = d * np.finfo(np.float64).eps * scale
    for _ in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    A[p, q] = A[q, p] = 0.0
                    continue
                rotated = True
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0

                vec_p = V[:, p].copy()
                vec_q = V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
        if not rotated:
            break
    else:
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {off:.3e})")
    return np.diag(A).copy(), V


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly nonzero component is positive."""
    Q = Q.copy()
    for k in range(Q.shape[1]):
        col = Q[:, k]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1.0))
        if len(nonzero) and col[nonzero[0]] < 0:
            Q[:, k] = -col
    return Q


def top_eigen(S: np.ndarray, m: Optional[int] = None, solver: str = "auto") -> EigenBasis:
    """
    Top-m eigenpairs of a symmetric matrix.

    Args:
        S: (d, d) matrix; symmetrised as (S + S^T) / 2.
        m: Number of eigenvectors, 1 <= m <= d. Defaults to min(100, d).
        solver: "jacobi", "lapack", or "auto" (Jacobi up to d = 512).
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"expected a square matrix, got {S.shape}")
    S = (S + S.T) / 2.0
    d = S.shape[0]
    if m is None:
        m = min(DEFAULT_RANK, d)
    if m < 1 or m > d:
        raise ValidationError(f"eigen rank m must be in [1, {d}], got {m}")
    if solver == "auto":
        solver = "jacobi" if d <= JACOBI_MAX_DIM else "lapack"
    if solver == "jacobi":
        values, vectors = jacobi_eigh(S)
    elif solver == "lapack":
        values, vectors = np.linalg.eigh(S)
    else:
        raise ValidationError(f"unknown eigen solver {solver!r}")

    order = np.argsort(-values, kind="stable")[:m]
    values = values[order]
    Q = _fix_signs(vectors[:, order])

    norm_s = np.linalg.norm(S, 2) if d else 0.0
    residuals = np.linalg.norm(S @ Q - Q * values, axis=0)
    worst = float(residuals.max())
    if worst > RESIDUAL_TOL * (norm_s + 1.0):
        raise NumericalError(f"eigenpair residual {worst:.3e} exceeds tolerance")

    basis = EigenBasis(Q=Q, eigenvalues=values, explained_ratio=0.0)
    basis.explained_ratio = explained(basis, S)
    logger.info("Eigenbasis: kept %d of %d directions (explained %.4f)", m, d, basis.explained_ratio)
    return basis


def explained(basis: EigenBasis, S: np.ndarray) -> float:
    """Share of the trace carried by the kept eigenvalues; 1 for zero scatter or m = d."""
    S = np.asarray(S, dtype=np.float64)
    trace = float(np.trace(S))
    if basis.rank == S.shape[0] or abs(trace) <= np.finfo(np.float64).tiny:
        return 1.0
    ratio = float(np.sum(basis.eigenvalues)) / trace
    return min(max(ratio, 0.0), 1.0)

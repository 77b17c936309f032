"""
Tests for the scatter matrix and the eigensolver.

The Jacobi solver is compared against LAPACK on random symmetric matrices.
"""

import numpy as np
import pytest

from tail_augment.corpus import Corpus, Document, build_label_space, split_head_tail
from tail_augment.eigenbasis import EigenBasis, explained, jacobi_eigh, scatter, top_eigen
from tail_augment.errors import ShapeError, ValidationError


def _symmetric(rng, d):
    A = rng.standard_normal((d, d))
    return (A + A.T) / 2.0


# ---------------------------------------------------------------------------
# 1. Eigensolver
# ---------------------------------------------------------------------------

class TestJacobi:
    """Cyclic Jacobi against numpy.linalg.eigh."""

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_lapack(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 33))
        S = _symmetric(rng, d)
        values, vectors = jacobi_eigh(S)
        np.testing.assert_allclose(np.sort(values), np.linalg.eigvalsh(S), rtol=0, atol=1e-8)
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(d), rtol=0, atol=1e-8)
        np.testing.assert_allclose(S @ vectors, vectors * values, rtol=0, atol=1e-8)

    def test_diagonal_input(self):
        values, vectors = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(values, [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(vectors, np.eye(3))


class TestTopEigen:
    """Tests for top_eigen."""

    def test_descending_and_sign_convention(self):
        rng = np.random.default_rng(0)
        S = _symmetric(rng, 12)
        basis = top_eigen(S, 5)
        assert basis.rank == 5
        assert np.all(np.diff(basis.eigenvalues) <= 0)
        np.testing.assert_allclose(basis.eigenvalues, np.linalg.eigvalsh(S)[::-1][:5], atol=1e-8)
        for k in range(5):
            col = basis.Q[:, k]
            first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert first > 0

    def test_solvers_agree(self):
        rng = np.random.default_rng(1)
        S = _symmetric(rng, 10)
        S = S @ S.T
        a = top_eigen(S, 4, solver="jacobi")
        b = top_eigen(S, 4, solver="lapack")
        np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-8)
        np.testing.assert_allclose(a.Q, b.Q, atol=1e-6)

    def test_asymmetric_input_is_symmetrised(self):
        S = np.array([[2.0, 1.0], [0.0, 2.0]])
        basis = top_eigen(S, 2)
        np.testing.assert_allclose(basis.eigenvalues, [2.5, 1.5])

    def test_default_rank(self):
        assert top_eigen(np.eye(3)).rank == 3

    def test_rank_out_of_range(self):
        with pytest.raises(ValidationError):
            top_eigen(np.eye(3), 4)
        with pytest.raises(ValidationError):
            top_eigen(np.eye(3), 0)

    def test_bad_input(self):
        with pytest.raises(ShapeError):
            top_eigen(np.zeros((2, 3)), 1)
        with pytest.raises(ValidationError):
            top_eigen(np.eye(2), 1, solver="qr")

    def test_project(self):
        basis = top_eigen(np.diag([5.0, 1.0, 0.0]), 1)
        np.testing.assert_allclose(basis.project(np.array([2.0, 3.0, 4.0])), [2.0, 0.0, 0.0])


class TestExplained:
    """Tests for explained."""

    def test_partial_trace(self):
        S = np.diag([6.0, 3.0, 1.0])
        assert top_eigen(S, 2).explained_ratio == pytest.approx(0.9)

    def test_full_rank_and_zero_scatter(self):
        assert top_eigen(np.diag([2.0, 1.0]), 2).explained_ratio == 1.0
        zero = EigenBasis(Q=np.eye(3)[:, :1], eigenvalues=np.zeros(1), explained_ratio=0.0)
        assert explained(zero, np.zeros((3, 3))) == 1.0


# ---------------------------------------------------------------------------
# 2. Scatter
# ---------------------------------------------------------------------------

class TestScatter:
    """Tests for scatter."""

    def _corpus(self):
        corpus = Corpus([
            Document("a", (), ("H",)),
            Document("b", (), ("H",)),
            Document("c", (), ("T",)),
        ])
        return corpus, split_head_tail(build_label_space(corpus), 1)

    def test_within_label_scatter(self):
        corpus, space = self._corpus()
        R = np.array([[1.0, 0.0], [3.0, 0.0], [100.0, 100.0]])
        np.testing.assert_allclose(scatter(R, corpus, space), [[2.0, 0.0], [0.0, 0.0]])

    def test_symmetric_psd(self):
        rng = np.random.default_rng(5)
        labels = [(f"H{i % 3}",) for i in range(30)] + [("T",)]
        corpus = Corpus(Document(f"d{i}", (), lab) for i, lab in enumerate(labels))
        space = split_head_tail(build_label_space(corpus), 1)
        S = scatter(rng.standard_normal((31, 5)), corpus, space)
        np.testing.assert_array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() > -1e-10

    def test_errors(self):
        corpus, space = self._corpus()
        with pytest.raises(ShapeError):
            scatter(np.zeros((2, 2)), corpus, space)
        with pytest.raises(ValidationError):
            scatter(np.zeros((3, 2)), corpus, split_head_tail(space, 2))

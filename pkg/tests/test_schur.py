import math

import numpy as np
import pytest

from arnagg.arnoldi import Aggregation, arnoldi_iterate, build_aggregation
from arnagg.errors import (
    ComplexStationary,
    NoConvergence,
    RankDeficient,
    ShapeError,
)
from arnagg.mchain import Distribution, inf_norm
from arnagg.models import counterexample, random_chain
from arnagg.schur import (
    aggregated_stationary,
    leading_eigvec,
    qr_decompose,
    schur_decompose,
)

from oracles import (
    eigenvalues_by_char_poly,
    multiset_distance,
    power_iteration_stationary,
)


def reconstruction_error(m, s):
    m = np.asarray(m, dtype=complex)
    rebuilt = s.unitary @ s.triangular @ s.unitary.conj().T
    return inf_norm(rebuilt - m)


def unitarity_error(s):
    u = s.unitary
    return inf_norm(u @ u.conj().T - np.eye(u.shape[0]))


class TestQRDecompose:
    def test_identity(self):
        pair = qr_decompose(np.eye(3))
        assert np.array_equal(pair.q, np.eye(3))
        assert np.array_equal(pair.r, np.eye(3))

    def test_two_by_two_reconstruction(self):
        m = np.array([[1.0, 1.0], [1.0, 0.0]])
        pair = qr_decompose(m)
        assert np.abs(pair.q @ pair.r - m).max() <= 1e-14
        assert pair.r[1, 0] == 0.0
        assert np.abs(pair.q.T @ pair.q - np.eye(2)).max() <= 1e-14

    def test_equal_columns_rank_deficient(self):
        m = np.array([[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
        with pytest.raises(RankDeficient) as err:
            qr_decompose(m)
        assert err.value.index == 1

    def test_random_real_and_complex(self, rng):
        for _ in range(10):
            n, k = int(rng.integers(2, 9)), int(rng.integers(1, 6))
            n = max(n, k)
            m = rng.standard_normal((n, k))
            if rng.random() < 0.5:
                m = m + 1j * rng.standard_normal((n, k))
            pair = qr_decompose(m)
            scale = np.abs(m).max()
            assert np.abs(pair.q @ pair.r - m).max() <= 1e-12 * scale
            assert np.abs(pair.q.conj().T @ pair.q - np.eye(k)).max() <= 1e-12
            diag = np.diag(pair.r)
            assert np.all(np.abs(np.imag(diag)) == 0.0)
            assert np.all(np.real(diag) >= 0.0)
            tri = np.tril(pair.r, -1)
            assert np.abs(tri).max(initial=0.0) == 0.0


class TestSchurDecompose:
    def test_diagonal_matrix_is_sorted_by_permutation(self):
        s = schur_decompose(np.diag([3.0, 1.0, 2.0]))
        assert np.allclose(np.diag(s.triangular).real, [3.0, 2.0, 1.0], atol=1e-12)
        perm = np.abs(s.unitary)
        assert np.allclose(perm @ perm.T, np.eye(3), atol=1e-12)
        assert np.allclose(np.sort(perm.ravel())[-3:], 1.0, atol=1e-12)

    def test_symmetric_permutation_eigenvalues(self):
        # characteristic polynomial x^2 - 1: eigenvalues 1 and -1
        s = schur_decompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(s.eigenvalues, [1.0, -1.0], atol=1e-12)

    def test_invariants_on_random_matrices(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 31))
            m = rng.standard_normal((n, n))
            s = schur_decompose(m)
            scale = max(inf_norm(m), 1e-12)
            assert reconstruction_error(m, s) <= 1e-9 * scale
            assert unitarity_error(s) <= 1e-10
            assert np.abs(np.tril(s.triangular, -1)).max(initial=0.0) <= 1e-10

    def test_eigenvalues_match_char_poly_roots(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 6))
            m = rng.standard_normal((n, n))
            s = schur_decompose(m)
            roots = eigenvalues_by_char_poly(m)
            assert multiset_distance(s.eigenvalues, roots) <= 1e-6

    def test_sorting_key(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 12))
            m = rng.standard_normal((n, n))
            evs = schur_decompose(m).eigenvalues
            keys = [(-ev.real, abs(ev.imag)) for ev in evs]
            assert keys == sorted(keys)

    def test_sorting_is_pure_reordering(self, rng):
        # multiset of the sorted diagonal equals the unsorted eigenvalues
        m = rng.standard_normal((5, 5))
        s = schur_decompose(m)
        assert multiset_distance(s.eigenvalues, eigenvalues_by_char_poly(m)) <= 1e-6

    def test_hessenberg_input_fast_path(self, rng):
        h = np.triu(rng.standard_normal((8, 8)), -1)
        s = schur_decompose(h)
        assert reconstruction_error(h, s) <= 1e-9 * inf_norm(h)

    def test_leading_eigenvalue_of_full_aggregation_is_one(self):
        p = random_chain(10, 1.0, seed=81)
        p0 = Distribution.random(10, seed=82)
        agg = build_aggregation(arnoldi_iterate(p, p0, 10), p0)
        s = schur_decompose(agg.step_matrix.T)
        lam, _ = leading_eigvec(s)
        assert abs(lam - 1.0) <= 1e-10
        # cross-check: the true chain fixes its stationary vector
        stat = power_iteration_stationary(p.toarray())
        assert np.abs(stat @ p.toarray() - stat).sum() <= 1e-10

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            schur_decompose(np.ones((2, 3)))

    def test_no_convergence_when_budget_exhausted(self):
        m = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        with pytest.raises(NoConvergence):
            schur_decompose(m, max_sweeps=0)

    def test_complex_input(self, rng):
        m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        s = schur_decompose(m)
        assert reconstruction_error(m, s) <= 1e-9 * inf_norm(m)


class TestLeadingEigvec:
    def test_diagonal_case(self):
        s = schur_decompose(np.diag([1.0, 0.5]))
        lam, v = leading_eigvec(s)
        assert lam == pytest.approx(1.0)
        assert np.allclose(np.abs(v), [1.0, 0.0], atol=1e-12)

    def test_two_state_chain_right_eigenvector(self):
        # eigenvalues 1 and 0.7; unit right eigenvector for 1 is (1,1)/sqrt(2)
        m = np.array([[0.9, 0.1], [0.2, 0.8]])
        s = schur_decompose(m)
        lam, v = leading_eigvec(s)
        assert abs(lam - 1.0) <= 1e-12
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert np.abs(m @ v - lam * v).max() <= 1e-8
        e = 1 / math.sqrt(2)
        phase = v[0] / abs(v[0])
        assert np.abs(v / phase - np.array([e, e])).max() <= 1e-10

    def test_one_by_one_zero_matrix(self):
        s = schur_decompose(np.array([[0.0]]))
        lam, v = leading_eigvec(s)
        assert lam == 0.0
        assert np.allclose(np.abs(v), [1.0])

    def test_back_substitution_when_winner_is_not_first(self):
        # sorted diagonal is (2, 1); the eigenvalue closest to one is second
        m = np.array([[2.0, 1.0], [0.0, 1.0]])
        s = schur_decompose(m)
        lam, v = leading_eigvec(s)
        assert lam == pytest.approx(1.0)
        assert np.abs(m @ v - lam * v).max() <= 1e-8
        assert s.eigenvalues[0] == pytest.approx(2.0)

    def test_residual_on_random_matrices(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 15))
            m = rng.standard_normal((n, n))
            lam, v = leading_eigvec(schur_decompose(m))
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.norm(m @ v - lam * v) <= 1e-8 * max(1.0, inf_norm(m))


class TestAggregatedStationary:
    def test_single_state_aggregation(self):
        q = np.array([0.6, 0.8])  # unit 2-norm, 1-norm 1.4
        agg = Aggregation(
            step_matrix=np.array([[1.0]]),
            disaggregation=q[None, :],
            initial=np.array([1.0]),
        )
        out = aggregated_stationary(agg)
        assert out.stationary == pytest.approx([1.0 / 1.4])

    def test_counterexample_stationary(self):
        p, p0 = counterexample(0.5)
        agg = build_aggregation(arnoldi_iterate(p, p0, 1), p0)
        out = aggregated_stationary(agg)
        assert np.allclose(out.stationary, [1.0], atol=1e-14)
        assert np.abs(out.stationary @ out.disaggregation).sum() == pytest.approx(1.0)

    def test_full_size_matches_power_iteration(self):
        p = random_chain(10, 1.0, seed=91)
        p0 = Distribution.random(10, seed=92)
        agg = aggregated_stationary(build_aggregation(arnoldi_iterate(p, p0, 10), p0))
        image = agg.stationary @ agg.disaggregation
        pd = p.toarray()
        assert np.abs(image - image @ pd).sum() <= 1e-8
        oracle = power_iteration_stationary(pd)
        assert np.abs(image - oracle).sum() <= 1e-6
        assert np.abs(image).sum() == pytest.approx(1.0, abs=1e-10)

    def test_complex_leading_pair_raises(self):
        theta = 0.5
        rot = np.array([[math.cos(theta), math.sin(theta)],
                        [-math.sin(theta), math.cos(theta)]])
        agg = Aggregation(
            step_matrix=rot,
            disaggregation=np.eye(2),
            initial=np.array([1.0, 0.0]),
        )
        with pytest.raises(ComplexStationary):
            aggregated_stationary(agg)

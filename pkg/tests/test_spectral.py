"""Hessenberg reduction, QR eigenvalues, consensus spectrum verdicts.

numpy.linalg.eig serves as the independent oracle for eigenvalue
accuracy; frozen small-matrix spectra were derived by hand first:
  - [[-1, 1], [0, 0]]: {0, -1};
  - unit 4-ring coupling: {0, -2, -1 + i, -1 - i}.
"""

import numpy as np
import pytest

from consensus_lab import (
    AmbiguousSpectrum,
    NoConvergence,
    consensus_spectrum_verdict,
    delta_digraph,
    eigenvalues,
    from_offdiagonal,
    hessenberg_form,
    root_nodes,
    spectral_graph_equivalence,
)

from conftest import chain_matrix, random_metzler


def ring(n, w=1.0):
    off = np.zeros((n, n))
    for k in range(n):
        off[k, (k + 1) % n] = w
    return from_offdiagonal(off).entries


def sorted_eigs(values):
    arr = np.asarray(values, dtype=complex)
    return arr[np.lexsort((-arr.imag, -arr.real))]


def assert_spectra_match(computed, expected, tol=1e-8):
    a = sorted_eigs(computed)
    b = sorted_eigs(expected)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b)) < tol


class TestHessenberg:
    def test_structure_and_similarity(self, rng):
        A = rng.standard_normal((6, 6))
        H = hessenberg_form(A)
        below = np.tril(H, -2)
        assert np.max(np.abs(below)) < 1e-12
        assert_spectra_match(np.linalg.eigvals(H), np.linalg.eigvals(A), 1e-8)

    def test_small_matrices_untouched(self):
        A = np.array([[2.0]])
        assert np.allclose(hessenberg_form(A), A)
        B = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(hessenberg_form(B), B)


class TestEigenvalues:
    def test_chain_frozen_spectrum(self):
        assert_spectra_match(eigenvalues(chain_matrix()), [0.0, -1.0], 1e-12)

    def test_ring4_frozen_spectrum(self):
        expected = [0.0, -2.0, -1.0 + 1.0j, -1.0 - 1.0j]
        assert_spectra_match(eigenvalues(ring(4)), expected, 1e-10)

    def test_against_numpy_on_random_metzler(self, rng):
        for _ in range(60):
            n = int(rng.integers(2, 8))
            A = random_metzler(rng, n)
            assert_spectra_match(eigenvalues(A), np.linalg.eigvals(A), 1e-7)

    def test_against_numpy_on_general_matrices(self, rng):
        for _ in range(60):
            n = int(rng.integers(2, 7))
            A = rng.standard_normal((n, n))
            assert_spectra_match(eigenvalues(A), np.linalg.eigvals(A), 1e-7)

    def test_zero_row_sum_gives_zero_eigenvalue(self, rng):
        for _ in range(20):
            vals = eigenvalues(random_metzler(rng, 5, density=0.8))
            assert min(abs(v) for v in vals) < 1e-9

    def test_gershgorin_bound_on_real_parts(self, rng):
        for _ in range(20):
            A = random_metzler(rng, 4, density=0.9)
            radius = float(np.max(-np.diag(A))) * 2.0
            for v in eigenvalues(A):
                assert v.real <= 1e-9
                assert abs(v) <= radius + 1e-9

    def test_no_convergence_on_unit_circle_companion(self):
        # companion matrix of z^4 - 1: eigenvalues 1, -1, i, -i all sit
        # on the unit circle, so unshifted sweeps cannot separate them
        C = np.array([
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        with pytest.raises(NoConvergence):
            eigenvalues(C, max_iterations=500)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            eigenvalues(np.zeros((2, 3)))


class TestSpectrumVerdict:
    def test_rooted_chain_is_stable(self):
        verdict = consensus_spectrum_verdict(eigenvalues(chain_matrix()))
        assert verdict.consensus_stable
        assert verdict.zero_count == 1
        assert verdict.decay_margin == pytest.approx(1.0, abs=1e-9)

    def test_two_components_not_stable(self):
        A = np.zeros((4, 4))
        A[:2, :2] = np.array([[-1.0, 1.0], [1.0, -1.0]])
        A[2:, 2:] = np.array([[-2.0, 2.0], [2.0, -2.0]])
        verdict = consensus_spectrum_verdict(eigenvalues(A))
        assert verdict.zero_count == 2
        assert not verdict.consensus_stable

    def test_ambiguous_dead_zone(self):
        values = [0.0 + 0.0j, -5e-8 + 3e-7j, -2.0 + 0.0j]
        with pytest.raises(AmbiguousSpectrum):
            consensus_spectrum_verdict(values, gap_tol=1e-7)

    def test_gap_tol_resolves_ambiguity(self):
        values = [0.0 + 0.0j, -5e-8 + 3e-7j, -2.0 + 0.0j]
        verdict = consensus_spectrum_verdict(values, gap_tol=1e-6)
        assert verdict.zero_count == 2
        assert not verdict.consensus_stable


class TestGraphEquivalence:
    def test_rooted_cases_agree(self, rng):
        hits = 0
        for _ in range(40):
            n = int(rng.integers(2, 6))
            A = random_metzler(rng, n, density=0.9)
            report = spectral_graph_equivalence(A)
            assert report.agree
            hits += report.verdict.consensus_stable
        assert hits > 30

    def test_unrooted_case_agrees_on_instability(self):
        A = np.zeros((4, 4))
        A[:2, :2] = np.array([[-1.0, 1.0], [1.0, -1.0]])
        A[2:, 2:] = np.array([[-2.0, 2.0], [2.0, -2.0]])
        report = spectral_graph_equivalence(A)
        assert report.agree
        assert not report.graph_stable
        assert not report.verdict.consensus_stable

    def test_delta_threshold_changes_graph_side(self):
        # all arcs below delta: graph route says unrooted while the
        # spectrum still contracts, so the routes honestly disagree
        A = np.array([[-0.01, 0.01], [0.02, -0.02]])
        strict = spectral_graph_equivalence(A, delta=0.1)
        assert not strict.graph_stable
        assert strict.verdict.consensus_stable
        assert not strict.agree
        loose = spectral_graph_equivalence(A, delta=0.001)
        assert loose.agree

    def test_report_matches_direct_routes(self, rng):
        A = random_metzler(rng, 5, density=0.7)
        report = spectral_graph_equivalence(A, delta=0.0)
        roots = root_nodes(delta_digraph(A, 0.0))
        assert report.graph_stable == bool(roots)
        verdict = consensus_spectrum_verdict(eigenvalues(A))
        assert report.verdict.consensus_stable == verdict.consensus_stable

"""
Tests for the master-equation engine

This test suite covers:
1. Operators: lowering operator, Hamiltonian, dissipator, vectorization
2. Structure of the Liouvillian: trace preservation, conjugate pairs, swap symmetry
3. Spectrum and steady state on the dense and the sparse path
4. Time evolution of density matrices
5. Fock sizing, cutoff adequacy and gap convergence in the cutoff
"""

import math

import numpy as np
from django.test import SimpleTestCase, tag
from scipy import sparse

from crystal.engine.exceptions import (
    ConfigurationError,
    DegenerateSteadyStateError,
    SizingError,
)
from crystal.engine.lindblad import (
    FockConfig,
    GapCheck,
    annihilation,
    build_hamiltonian,
    build_liouvillian,
    check_gap_convergence,
    commutator_superoperator,
    dissipator,
    evolve_rho,
    fitting_cutoff,
    minimal_cutoff,
    mode_occupations,
    mode_permutation,
    spectrum,
    steady_state,
    steady_state_method,
    trace_distance,
    unvectorize,
    validate_cutoff,
    vectorize,
)
from crystal.engine.model import CouplingSpec, OscillatorParams

# fast saturation keeps the Fock space small
SATURATED = OscillatorParams(omega=1.0, kappa1=0.1, kappa2=0.2)


def random_density_matrix(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def fock_projector(d, n):
    rho = np.zeros((d, d), dtype=complex)
    rho[n, n] = 1.0
    return rho


class OperatorTestCase(SimpleTestCase):

    def test_lowering_operator_d2(self):
        np.testing.assert_array_equal(annihilation(2).toarray(), [[0, 1], [0, 0]])

    def test_lowering_operator_entries(self):
        a = annihilation(4).toarray()
        np.testing.assert_allclose(np.diag(a, 1), [1.0, math.sqrt(2.0), math.sqrt(3.0)])

    def test_canonical_commutator_below_cutoff(self):
        a = annihilation(5).toarray()
        commutator = a @ a.conj().T - a.conj().T @ a
        np.testing.assert_allclose(commutator[:4, :4], np.eye(4), atol=1e-14)
        self.assertAlmostEqual(commutator[4, 4].real, -4.0)

    def test_too_small_dimension(self):
        with self.assertRaises(ConfigurationError):
            annihilation(1)

    def test_hamiltonian_is_number_operator(self):
        H = build_hamiltonian(OscillatorParams(omega=1.0), FockConfig(cutoff=3))
        np.testing.assert_allclose(H.toarray(), np.diag([0.0, 1.0, 2.0]))

    def test_drive_enters_hermitian(self):
        H = build_hamiltonian(OscillatorParams(omega=1.0, drive=0.5), FockConfig(cutoff=2)).toarray()
        np.testing.assert_allclose(H, [[0.0, 0.5], [0.5, 1.0]])
        H = build_hamiltonian(
            OscillatorParams(omega=0.3, drive=0.2 + 0.4j), FockConfig(cutoff=4, n_modes=2)
        ).toarray()
        np.testing.assert_allclose(H, H.conj().T, atol=1e-15)

    def test_hamiltonian_swap_symmetric(self):
        fock = FockConfig(cutoff=3, n_modes=2)
        H = build_hamiltonian(OscillatorParams(omega=0.7, drive=0.1j), fock)
        P = mode_permutation(fock, [1, 0])
        self.assertLess(abs(P @ H @ P.T - H).max(), 1e-15)

    def test_dissipator_of_lowering_operator(self):
        D = dissipator(annihilation(2))
        result = unvectorize(D @ vectorize(fock_projector(2, 1)), 2)
        np.testing.assert_allclose(result, np.diag([2.0, -2.0]))

    def test_dissipator_is_traceless(self):
        rng = np.random.default_rng(1)
        o = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rho = random_density_matrix(rng, 3)
        result = unvectorize(dissipator(o) @ vectorize(rho), 3)
        self.assertAlmostEqual(abs(np.trace(result)), 0.0, places=12)

    def test_commutator_superoperator(self):
        rng = np.random.default_rng(2)
        H = rng.standard_normal((3, 3))
        H = H + H.T
        rho = random_density_matrix(rng, 3)
        result = unvectorize(commutator_superoperator(H) @ vectorize(rho), 3)
        np.testing.assert_allclose(result, -1j * (H @ rho - rho @ H), atol=1e-13)

    def test_vectorization_stacks_columns(self):
        rho = np.array([[1, 2], [3, 4]])
        np.testing.assert_array_equal(vectorize(rho), [1, 3, 2, 4])
        np.testing.assert_array_equal(unvectorize(vectorize(rho), 2), rho)


class LiouvillianStructureTestCase(SimpleTestCase):

    def test_pure_hamiltonian_spectrum(self):
        params = OscillatorParams(omega=1.0, kappa1=0.0, kappa2=0.0)
        L = build_liouvillian(params, CouplingSpec(mu=0.0), FockConfig(cutoff=3))
        result = spectrum(L)
        expected = sorted(-(j - k) for j in range(3) for k in range(3))
        np.testing.assert_allclose(sorted(result.eigenvalues.imag), expected, atol=1e-12)
        np.testing.assert_allclose(result.eigenvalues.real, 0.0, atol=1e-12)

    def test_trace_preserving(self):
        fock = FockConfig(cutoff=3, n_modes=2)
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.3, gamma=0.1), fock)
        self.assertLess(L.adjoint_identity_residual(), 1e-12)

    def test_spectrum_closed_under_conjugation(self):
        L = build_liouvillian(
            OscillatorParams(omega=1.0, kappa1=0.1, kappa2=0.2, drive=0.05),
            CouplingSpec(mu=0.0), FockConfig(cutoff=6),
        )
        values = spectrum(L).eigenvalues
        for value in values:
            if abs(value.imag) > 1e-8:
                self.assertLess(np.min(np.abs(values - np.conj(value))), 1e-8 * max(1.0, abs(value)))

    def test_dissipative(self):
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.3), FockConfig(cutoff=3, n_modes=2))
        self.assertLessEqual(spectrum(L).eigenvalues.real.max(), 1e-10)

    def test_commutes_with_mode_swap(self):
        fock = FockConfig(cutoff=3, n_modes=2)
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.3), fock)
        P = mode_permutation(fock, [1, 0])
        swap = sparse.kron(P, P, format='csr')
        self.assertLess(abs(swap @ L.matrix @ swap.T - L.matrix).max(), 1e-13)


class SpectrumTestCase(SimpleTestCase):

    def test_single_zero_mode(self):
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=8))
        result = spectrum(L)
        self.assertEqual(result.method, 'dense')
        self.assertEqual(result.zero_modes, 1)
        nonzero = result.eigenvalues[np.abs(result.eigenvalues) >= 1e-9]
        self.assertLess(nonzero.real.max(), 0.0)
        self.assertGreater(result.gap, 0.0)

    def test_sorted_by_real_part(self):
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=5))
        real = spectrum(L, k=10).eigenvalues.real
        self.assertTrue(np.all(np.diff(real) <= 1e-12))

    def test_coupling_slows_the_slowest_mode(self):
        gaps = []
        for n in (1, 2):
            fock = FockConfig(cutoff=6, n_modes=n)
            gaps.append(spectrum(build_liouvillian(SATURATED, CouplingSpec(mu=0.3), fock)).gap)
        self.assertLess(gaps[1], gaps[0])

    def test_arnoldi_agrees_with_dense(self):
        dense = spectrum(build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=8)))
        fock = FockConfig(cutoff=8, dense_limit=10)
        arnoldi = spectrum(build_liouvillian(SATURATED, CouplingSpec(mu=0.0), fock), k=6)
        self.assertEqual(arnoldi.method, 'arnoldi')
        self.assertEqual(arnoldi.zero_modes, 1)
        self.assertAlmostEqual(arnoldi.gap, dense.gap, places=8)

    @tag('slow')
    def test_gap_decreases_with_oscillator_count(self):
        gaps = []
        for n in (1, 2, 3):
            fock = FockConfig(cutoff=6, n_modes=n)
            gaps.append(spectrum(build_liouvillian(SATURATED, CouplingSpec(mu=0.3), fock), k=6).gap)
        np.testing.assert_allclose(gaps, [0.14730, 0.12621, 0.11343], atol=2e-3)
        self.assertLess(gaps[1], gaps[0])
        self.assertLess(gaps[2], gaps[1])


class SteadyStateTestCase(SimpleTestCase):

    def setUp(self):
        self.fock = FockConfig(cutoff=10)
        self.liouvillian = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), self.fock)
        self.rho = steady_state(self.liouvillian)

    def test_density_matrix(self):
        self.assertAlmostEqual(np.trace(self.rho).real, 1.0, places=12)
        np.testing.assert_allclose(self.rho, self.rho.conj().T, atol=1e-14)
        self.assertGreater(np.linalg.eigvalsh(self.rho).min(), -1e-10)

    def test_in_kernel(self):
        residual = np.linalg.norm(self.liouvillian.matrix @ vectorize(self.rho))
        self.assertLess(residual, 1e-9 * self.liouvillian.norm())

    def test_diagonal_without_drive(self):
        off_diagonal = self.rho - np.diag(np.diag(self.rho))
        self.assertLess(np.linalg.norm(off_diagonal), 1e-9)

    def test_sparse_path_agrees(self):
        fock = FockConfig(cutoff=10, dense_limit=10)
        liouvillian = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), fock)
        self.assertEqual(steady_state_method(liouvillian), 'direct')
        sparse_rho = steady_state(liouvillian)
        self.assertLess(trace_distance(sparse_rho, self.rho), 1e-10)

    def test_arnoldi_agrees_with_svd(self):
        self.assertEqual(steady_state_method(self.liouvillian), 'svd')
        arnoldi_rho = steady_state(self.liouvillian, 'arnoldi')
        self.assertAlmostEqual(np.trace(arnoldi_rho).real, 1.0, places=12)
        self.assertLess(trace_distance(arnoldi_rho, self.rho), 1e-8)

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            steady_state(self.liouvillian, 'power')

    def test_occupation_positive(self):
        occupation, = mode_occupations(self.rho, self.fock)
        self.assertGreater(occupation, 0.0)

    def test_no_gain_is_degenerate(self):
        params = OscillatorParams(omega=1.0, kappa1=0.0, kappa2=0.2)
        L = build_liouvillian(params, CouplingSpec(mu=0.0), FockConfig(cutoff=4))
        np.testing.assert_allclose(L.matrix @ vectorize(fock_projector(4, 0)), 0.0, atol=1e-15)
        with self.assertRaises(DegenerateSteadyStateError):
            steady_state(L)
        with self.assertRaises(DegenerateSteadyStateError):
            steady_state(L, 'arnoldi')

    @tag('slow')
    def test_three_oscillators_on_the_arnoldi_path(self):
        fock = FockConfig(cutoff=6, n_modes=3)
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.3), fock)
        self.assertEqual(steady_state_method(L), 'arnoldi')
        rho = steady_state(L)
        self.assertAlmostEqual(np.trace(rho).real, 1.0, places=10)
        self.assertLess(np.linalg.norm(L.matrix @ vectorize(rho)), 1e-9 * L.norm())
        occupations = mode_occupations(rho, fock)
        np.testing.assert_allclose(occupations, occupations[0], rtol=1e-6)

    def test_relaxation_reaches_steady_state(self):
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=8))
        gap = spectrum(L).gap
        rho_ss = steady_state(L)
        final = evolve_rho(fock_projector(8, 0), L, [0.0, 50.0 / gap])[-1]
        self.assertLess(trace_distance(final, rho_ss), 1e-6)


class EvolutionTestCase(SimpleTestCase):

    def test_zero_generator_keeps_state(self):
        params = OscillatorParams(omega=0.0, kappa1=0.0, kappa2=0.0)
        L = build_liouvillian(params, CouplingSpec(mu=0.0), FockConfig(cutoff=3))
        rho0 = random_density_matrix(np.random.default_rng(4), 3)
        states = evolve_rho(rho0, L, [0.0, 1.0, 2.0])
        self.assertEqual(states.shape, (3, 3, 3))
        np.testing.assert_allclose(states[-1], rho0, atol=1e-14)

    def test_fock_state_is_stationary_under_rotation(self):
        params = OscillatorParams(omega=1.0, kappa1=0.0, kappa2=0.0)
        L = build_liouvillian(params, CouplingSpec(mu=0.0), FockConfig(cutoff=3))
        states = evolve_rho(fock_projector(3, 1), L, [0.0, 10.0])
        np.testing.assert_allclose(states[-1], fock_projector(3, 1), atol=1e-14)

    def test_preserves_trace_and_hermiticity(self):
        self._check_random_states(3)

    @tag('slow')
    def test_preserves_trace_and_hermiticity_many_states(self):
        self._check_random_states(20)

    def _check_random_states(self, count):
        rng = np.random.default_rng(8)
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=4))
        for _ in range(count):
            rho0 = random_density_matrix(rng, 4)
            for rho in evolve_rho(rho0, L, [0.0, 250.0, 500.0, 1000.0]):
                self.assertAlmostEqual(np.trace(rho).real, 1.0, delta=1e-9)
                self.assertLess(np.linalg.norm(rho - rho.conj().T), 1e-9)

    def test_rejects_non_density_matrix(self):
        L = build_liouvillian(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=3))
        with self.assertRaises(ConfigurationError):
            evolve_rho(2.0 * fock_projector(3, 0), L, [0.0, 1.0])


class SizingTestCase(SimpleTestCase):

    def test_dimensions(self):
        report = FockConfig(cutoff=4, n_modes=3).sizing()
        self.assertEqual(report.hilbert_dim, 64)
        self.assertEqual(report.liouville_dim, 4096)
        self.assertEqual(report.path, 'dense')
        self.assertTrue(report.fits)

    def test_sparse_path_above_dense_limit(self):
        self.assertEqual(FockConfig(cutoff=5, n_modes=3).sizing().path, 'sparse')

    def test_over_budget(self):
        fock = FockConfig(cutoff=10, n_modes=4, memory_budget=2**20)
        with self.assertRaises(SizingError):
            fock.check()
        with self.assertRaises(SizingError):
            build_hamiltonian(SATURATED, fock)

    def test_invalid_cutoff(self):
        with self.assertRaises(ConfigurationError):
            FockConfig(cutoff=1)


class CutoffValidationTestCase(SimpleTestCase):

    def test_no_gain_keeps_vacuum(self):
        report = validate_cutoff(OscillatorParams(kappa1=0.0, kappa2=0.2), 2)
        self.assertTrue(report.adequate)
        self.assertEqual(report.populations[0], 1.0)

    def test_saturated_small_cutoff_is_inadequate(self):
        report = validate_cutoff(SATURATED, 8)
        self.assertFalse(report.adequate)
        self.assertGreater(report.terminal_population, 1e-6)

    def test_saturated_large_cutoff_is_adequate(self):
        report = validate_cutoff(SATURATED, 14)
        self.assertTrue(report.adequate)
        self.assertAlmostEqual(sum(report.populations), 1.0, places=9)

    def test_minimal_cutoff(self):
        report = minimal_cutoff(SATURATED)
        self.assertTrue(report.adequate)
        self.assertGreater(report.cutoff, 8)
        self.assertLessEqual(report.cutoff, 12)
        self.assertFalse(validate_cutoff(SATURATED, report.cutoff - 1).adequate)

    def test_weak_saturation_needs_many_levels(self):
        self.assertFalse(validate_cutoff(OscillatorParams(), 10).adequate)

    @tag('slow')
    def test_weak_saturation_adequate_cutoff(self):
        self.assertTrue(validate_cutoff(OscillatorParams(), 44).adequate)


class CutoffConvergenceTestCase(SimpleTestCase):

    def test_largest_fitting_cutoff(self):
        self.assertEqual(fitting_cutoff(1, 11).cutoff, 11)
        self.assertEqual(fitting_cutoff(2, 11).cutoff, 11)
        self.assertEqual(fitting_cutoff(3, 11).cutoff, 8)

    def test_fitting_cutoff_never_exceeds_ceiling(self):
        fock = fitting_cutoff(2, 5, memory_budget=2**40)
        self.assertEqual(fock.cutoff, 5)
        self.assertEqual(fock.n_modes, 2)

    def test_nothing_fits(self):
        with self.assertRaises(SizingError):
            fitting_cutoff(6, 10, memory_budget=2**20)

    def test_relative_change(self):
        check = GapCheck(cutoff=7, gap=0.11297, reference_gap=0.11343)
        self.assertEqual(check.reference_cutoff, 6)
        self.assertAlmostEqual(check.relative_change, 0.00046 / 0.11297)
        self.assertTrue(check.converged)
        self.assertFalse(GapCheck(cutoff=5, gap=0.1, reference_gap=0.2).converged)
        self.assertEqual(GapCheck(cutoff=5, gap=0.0, reference_gap=0.1).relative_change, math.inf)

    def test_adequate_single_mode_cutoff_is_converged(self):
        d = minimal_cutoff(SATURATED).cutoff
        check = check_gap_convergence(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=d))
        self.assertEqual(check.reference_cutoff, d - 1)
        self.assertTrue(check.converged)
        self.assertTrue(check.to_dict()['converged'])

    def test_small_cutoff_is_not_converged(self):
        check = check_gap_convergence(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=3))
        self.assertFalse(check.converged)

    def test_nothing_to_compare_with(self):
        with self.assertRaises(ConfigurationError):
            check_gap_convergence(SATURATED, CouplingSpec(mu=0.0), FockConfig(cutoff=2))

    @tag('slow')
    def test_three_oscillator_gap_is_converged(self):
        fock = FockConfig(cutoff=7, n_modes=3)
        check = check_gap_convergence(SATURATED, CouplingSpec(mu=0.3), fock)
        self.assertLess(check.relative_change, 1e-2)
        self.assertAlmostEqual(check.gap, 0.11297, delta=2e-3)

"""
Tests for the oracle checks

This test suite covers:
1. The noiseless limit-cycle integration
2. The population rate equations and the frozen fixture
3. Agreement of the population oracle with the master-equation steady state
4. Report construction and cross-engine preconditions
"""

import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase, tag

from crystal.engine.exceptions import OracleError
from crystal.engine.model import CouplingSpec, OscillatorParams
from crystal.engine.oracle import (
    OracleReport,
    cross_engine_check,
    deterministic_limit_cycle,
    diagonal_sector_check,
    fixture_check,
    limit_cycle_check,
    load_fixture,
    population_rate_matrix,
    run_suite,
    single_vdp_steady_distribution,
)

FEW_QUANTA = OscillatorParams(omega=1.0, kappa1=0.1, kappa2=0.2)


class LimitCycleTestCase(SimpleTestCase):

    def test_semiclassical_radius(self):
        radius = deterministic_limit_cycle(OscillatorParams())
        self.assertAlmostEqual(radius, math.sqrt(10.0), delta=1e-6)

    def test_unit_radius(self):
        radius = deterministic_limit_cycle(OscillatorParams(kappa1=0.2, kappa2=0.1))
        self.assertAlmostEqual(radius, 1.0, delta=1e-6)

    def test_no_gain_decays(self):
        self.assertEqual(deterministic_limit_cycle(OscillatorParams(kappa1=0.0)), 0.0)

    def test_needs_saturation(self):
        with self.assertRaises(OracleError):
            deterministic_limit_cycle(OscillatorParams(kappa2=0.0))

    def test_report(self):
        report = limit_cycle_check(OscillatorParams())
        self.assertTrue(report.passed)
        self.assertEqual(report.name, 'deterministic_limit_cycle')


class PopulationOracleTestCase(SimpleTestCase):

    def test_rate_matrix_conserves_probability(self):
        generator = population_rate_matrix(FEW_QUANTA, 6)
        np.testing.assert_allclose(generator.sum(axis=0), 0.0, atol=1e-15)

    def test_distribution(self):
        populations = single_vdp_steady_distribution(FEW_QUANTA, 8)
        self.assertAlmostEqual(populations.sum(), 1.0, places=12)
        self.assertGreater(populations[:3].sum(), 0.95)

    def test_matches_exact_weights(self):
        fixture = load_fixture()
        populations = single_vdp_steady_distribution(FEW_QUANTA, fixture['cutoff'])
        mean = Fraction(fixture['mean_occupation_numerator'], fixture['normalizer'])
        self.assertAlmostEqual(float(np.dot(np.arange(8), populations)), float(mean), places=12)

    def test_no_gain_is_vacuum(self):
        populations = single_vdp_steady_distribution(OscillatorParams(kappa1=0.0, kappa2=0.2), 5)
        np.testing.assert_array_equal(populations, [1.0, 0.0, 0.0, 0.0, 0.0])

    def test_drive_rejected(self):
        with self.assertRaises(OracleError):
            single_vdp_steady_distribution(OscillatorParams(drive=0.1), 5)

    def test_fixture(self):
        report = fixture_check()
        self.assertTrue(report.passed)
        self.assertLess(report.observed, 1e-12)

    def test_master_equation_diagonal(self):
        report = diagonal_sector_check(FEW_QUANTA, 12)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(
            report.details['mean_occupation_oracle'], report.details['mean_occupation_full'], places=8
        )


class OracleReportTestCase(SimpleTestCase):

    def test_compare(self):
        report = OracleReport.compare('check', 2.0, 2.1, 0.1, relative=True)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.details['error'], 0.05)
        self.assertEqual(report.to_dict()['name'], 'check')

    def test_tolerance_must_be_positive(self):
        with self.assertRaises(OracleError):
            OracleReport('check', 1.0, 1.0, 0.0, True)


class CrossEngineTestCase(SimpleTestCase):

    def test_mode_limit(self):
        with self.assertRaises(OracleError):
            cross_engine_check(OscillatorParams(), CouplingSpec(), 3)

    def test_needs_semiclassical_regime(self):
        with self.assertRaises(OracleError):
            cross_engine_check(FEW_QUANTA, CouplingSpec(), 1)

    @tag('slow')
    def test_single_oscillator(self):
        report = cross_engine_check(OscillatorParams(), CouplingSpec(), 1, n_traj=1000)
        self.assertTrue(report.passed, report.details)

    @tag('slow')
    def test_coupled_pair_has_equal_occupations(self):
        params = OscillatorParams(omega=0.0, kappa1=0.1, kappa2=0.008)
        report = cross_engine_check(params, CouplingSpec(mu=0.3), 2, n_traj=1000)
        quantum = report.details['quantum_occupations']
        langevin = report.details['langevin_occupations']
        stderr = report.details['langevin_stderr']
        self.assertEqual(report.name, 'cross_engine_N2')
        self.assertAlmostEqual(quantum[0], quantum[1], delta=1e-8 * quantum[0])
        self.assertLess(abs(langevin[0] - langevin[1]), 4.0 * math.hypot(*stderr))


@tag('slow')
class SuiteTestCase(SimpleTestCase):

    def test_every_check_passes(self):
        reports = run_suite(n_traj=1000)
        self.assertEqual(
            [report.name for report in reports],
            ['deterministic_limit_cycle', 'diagonal_sector_steady_state',
             'cross_engine_N1', 'frozen_population_fixture'],
        )
        for report in reports:
            self.assertTrue(report.passed, report.name)

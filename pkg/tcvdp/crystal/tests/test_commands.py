"""
Tests for the experiment management commands

This test suite covers:
1. Dry runs: resolved configuration and sizing, nothing written
2. Exit codes for configuration problems, numerical failures and partial sweeps
3. Output directories: staging, --force, manifest and per-N files
4. The run registry (ExperimentRun and OracleCheck rows)
5. Reproducibility of outputs across worker counts
"""

import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings, tag

from crystal.engine.exceptions import FitError
from crystal.engine.oracle import OracleReport
from crystal.management.commands.run_langevin_decay import Command as DecayCommand
from crystal.management.experiment import (
    EXIT_CONFIGURATION,
    EXIT_NUMERICAL,
    EXIT_PARTIAL,
    SweepError,
)
from crystal.models import ExperimentKind, ExperimentRun, OracleCheck, RunStatus

# small decay run: two blocks of trajectories, fit well above the noise floor
DECAY_SETTINGS = [
    '--n-list', '2',
    '--set', 'ensemble.n_traj=100',
    '--set', 'ensemble.t_final=50',
    '--set', 'experiment.fit_start=10',
    '--set', 'experiment.fit_end=30',
    '--set', 'experiment.phase_time=50',
]

FEW_QUANTA = Path(settings.BASE_DIR) / 'configs' / 'few_quanta.yaml'


def read_csv(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.reader(handle))


class CommandTestCase(TestCase):
    """Runs commands into a temporary directory and captures their output"""

    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.root = Path(directory.name)

    def run_command(self, name, *args, out='out'):
        stdout, stderr = StringIO(), StringIO()
        if out is not None:
            args = (*args, '--out', str(self.root / out))
        call_command(name, *args, stdout=stdout, stderr=stderr)
        return json.loads(stdout.getvalue())

    def assertExitCode(self, code, name, *args, out='out'):
        with self.assertRaises(CommandError) as context:
            self.run_command(name, *args, out=out)
        self.assertEqual(context.exception.returncode, code)
        return context.exception


class DryRunTestCase(CommandTestCase):

    def test_liouville_sizing(self):
        summary = self.run_command(
            'run_liouville_spectrum', '--dry-run', '--n-list', '1,2', '--set', 'fock.cutoff=4'
        )
        self.assertTrue(summary['dry_run'])
        self.assertEqual(summary['sizing']['2']['liouville_dim'], 256)
        self.assertEqual(summary['config']['oscillator']['kappa2'], 0.2)
        self.assertFalse((self.root / 'out').exists())
        self.assertFalse(ExperimentRun.objects.exists())

    def test_liouville_cutoff_per_oscillator_count(self):
        summary = self.run_command('run_liouville_spectrum', '--dry-run')
        self.assertEqual(summary['adequate_cutoff'], 11)
        self.assertEqual(summary['cutoffs'], {'1': 11, '2': 11, '3': 8})
        self.assertTrue(all(report['fits'] for report in summary['sizing'].values()))

    @override_settings(TCVDP_MEMORY_BUDGET_MB=64)
    def test_liouville_budget_lowers_cutoff(self):
        summary = self.run_command('run_liouville_spectrum', '--dry-run', '--n-list', '1,3')
        self.assertEqual(summary['cutoffs'], {'1': 11, '3': 3})

    def test_liouville_parameters_are_reported(self):
        with self.assertLogs('crystal.management.commands.run_liouville_spectrum', 'WARNING') as logs:
            summary = self.run_command(
                'run_liouville_spectrum', '--dry-run', '--n-list', '1', '--set', 'coupling.gamma=0.5'
            )
        self.assertEqual(summary['parameters']['oscillator']['kappa1'], 0.1)
        self.assertEqual(summary['parameters']['oscillator']['kappa2'], 0.2)
        self.assertEqual(summary['parameters']['oscillator']['drive_re'], 0.0)
        self.assertEqual(summary['parameters']['coupling']['mu'], 0.3)
        self.assertEqual(summary['parameters']['coupling']['gamma'], 0.5)
        self.assertIn('coupling.gamma', logs.output[0])

    def test_ensemble_plan(self):
        summary = self.run_command('run_langevin_decay', '--dry-run')
        self.assertEqual(summary['n_list'], [4, 8, 16, 32])
        first = summary['ensembles'][0]
        self.assertEqual(first['n_steps'], 500000)
        self.assertEqual(first['n_blocks'], 32)

    def test_oversized_liouvillian(self):
        self.assertExitCode(
            EXIT_CONFIGURATION, 'run_liouville_spectrum', '--dry-run',
            '--n-list', '6', '--set', 'fock.cutoff=10',
        )


class ConfigurationExitTestCase(CommandTestCase):

    def test_invalid_value(self):
        error = self.assertExitCode(EXIT_CONFIGURATION, 'run_spectrum', '--set', 'oscillator.kappa2=0')
        self.assertIn('oscillator.kappa2', str(error))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_bad_n_list(self):
        self.assertExitCode(EXIT_CONFIGURATION, 'run_sync_sweep', '--n-list', '2,x')

    def test_sync_needs_pairs(self):
        self.assertExitCode(
            EXIT_CONFIGURATION, 'run_sync_sweep', '--n-list', '1,2',
            '--set', 'ensemble.t_final=1', '--set', 'experiment.eval_time=1',
        )

    def test_existing_output_directory(self):
        (self.root / 'out').mkdir()
        self.assertExitCode(EXIT_CONFIGURATION, 'run_langevin_decay', *DECAY_SETTINGS)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_too_few_trajectories(self):
        self.assertExitCode(
            EXIT_CONFIGURATION, 'run_langevin_decay', '--n-list', '2',
            '--set', 'ensemble.n_traj=50', '--set', 'ensemble.t_final=10',
        )
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, RunStatus.FAILED)
        self.assertEqual(run.exit_code, EXIT_CONFIGURATION)
        self.assertIn('error', run.summary)
        # staging directory removed, nothing left behind
        self.assertEqual(list(self.root.iterdir()), [])


class DecayCommandTestCase(CommandTestCase):

    def test_outputs(self):
        summary = self.run_command('run_langevin_decay', *DECAY_SETTINGS)
        out = self.root / 'out'
        self.assertEqual(summary['status'], RunStatus.SUCCEEDED)
        self.assertEqual(summary['exit_code'], 0)
        self.assertGreaterEqual(summary['fits']['2']['r_squared'], 0.0)

        order = read_csv(out / 'N2' / 'order_parameter.csv')
        self.assertEqual(order[0], ['t', 're_r', 'im_r', 'abs_r'])
        self.assertEqual(len(order), 52)
        fits = read_csv(out / 'gamma_fits.csv')
        self.assertEqual(fits[0], ['N', 'gamma', 'gamma_over_kappa1', 'r_squared'])
        self.assertEqual(fits[1][0], '2')
        self.assertEqual(len(read_csv(out / 'phase_fluctuations.csv')), 2)

        manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['kind'], ExperimentKind.LANGEVIN_DECAY)
        self.assertEqual(manifest['seed'], '0')
        self.assertIn('N2/order_parameter.csv', manifest['files'])
        self.assertEqual(manifest['config']['ensemble']['n_traj'], 100)

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, RunStatus.SUCCEEDED)
        self.assertEqual(run.output_dir, str(out.resolve()))
        self.assertEqual(run.summary['fits']['2']['gamma'], summary['fits']['2']['gamma'])
        self.assertIsNotNone(run.duration)

    def test_force_replaces_directory(self):
        out = self.root / 'out'
        out.mkdir()
        (out / 'stale.txt').write_text('old', encoding='utf-8')
        self.run_command('run_langevin_decay', *DECAY_SETTINGS, '--force')
        self.assertFalse((out / 'stale.txt').exists())
        self.assertTrue((out / 'manifest.json').exists())

    def test_same_output_for_any_worker_count(self):
        self.run_command('run_langevin_decay', *DECAY_SETTINGS, '--workers', '1', out='serial')
        self.run_command('run_langevin_decay', *DECAY_SETTINGS, '--workers', '2', out='parallel')
        for name in ('N2/order_parameter.csv', 'gamma_fits.csv', 'phase_fluctuations.csv'):
            self.assertEqual(
                (self.root / 'serial' / name).read_bytes(),
                (self.root / 'parallel' / name).read_bytes(),
                name,
            )

    def test_every_fit_failing(self):
        settings = DECAY_SETTINGS[:-4] + ['--set', 'experiment.fit_start=10', '--set', 'experiment.fit_end=12']
        self.assertExitCode(EXIT_NUMERICAL, 'run_langevin_decay', *settings)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, RunStatus.FAILED)
        self.assertEqual(run.exit_code, EXIT_NUMERICAL)
        self.assertFalse((self.root / 'out').exists())


class SweepTestCase(SimpleTestCase):
    """Tolerance for single oscillator counts failing inside a sweep"""

    def setUp(self):
        self.command = DecayCommand()
        self.command.failures = {}

    def task(self, failing):
        def run(n):
            if n in failing:
                raise FitError(f"no fit for N={n}")
            return n * 10
        return run

    def test_partial(self):
        results = self.command.sweep_over([2, 3, 4], self.task({3}))
        self.assertEqual(results, {2: 20, 4: 40})
        self.assertEqual(self.command.failures, {3: 'no fit for N=3'})
        self.assertEqual(self.command.outcome({}), (RunStatus.PARTIAL, EXIT_PARTIAL))

    def test_majority_failing(self):
        with self.assertRaises(SweepError) as context:
            self.command.sweep_over([2, 3, 4], self.task({3, 4}))
        self.assertEqual(set(context.exception.failures), {3, 4})

    def test_no_failures(self):
        self.command.sweep_over([2], self.task(set()))
        self.assertEqual(self.command.outcome({}), (RunStatus.SUCCEEDED, 0))


class EnsembleCommandsTestCase(CommandTestCase):

    def test_spectrum(self):
        summary = self.run_command(
            'run_spectrum', '--n-list', '2', '--window', 'rectangular',
            '--set', 'ensemble.n_traj=20', '--set', 'ensemble.t_final=100',
        )
        self.assertEqual(summary['window'], 'rectangular')
        spectrum = summary['spectra']['2']
        self.assertAlmostEqual(spectrum['total_power'] / spectrum['series_power'], 1.0, places=10)
        rows = read_csv(self.root / 'out' / 'N2' / 'spectrum.csv')
        self.assertEqual(rows[0], ['freq', 'power'])
        self.assertEqual(len(rows), 102)

    def test_spectrum_default_window_keeps_parseval(self):
        summary = self.run_command(
            'run_spectrum', '--n-list', '2',
            '--set', 'ensemble.n_traj=20', '--set', 'ensemble.t_final=100',
        )
        self.assertEqual(summary['window'], 'hann')
        self.assertLessEqual(summary['spectra']['2']['parseval_residual'], 1e-10)

    def test_sync_sweep(self):
        summary = self.run_command(
            'run_sync_sweep', '--n-list', '2,3',
            '--set', 'ensemble.n_traj=20', '--set', 'ensemble.t_final=10',
            '--set', 'experiment.eval_time=10',
        )
        self.assertEqual(set(summary['measures']), {'2', '3'})
        self.assertIn('fit', summary)
        self.assertEqual(summary['measures']['2']['baseline'], 0.5 / 0.75)
        rows = read_csv(self.root / 'out' / 'sync.csv')
        self.assertEqual(rows[0], ['N', 't', 's_c'])
        self.assertEqual(len(rows), 1 + 2 * 11)
        # identical initial amplitudes: the error mode starts collapsed
        self.assertEqual(rows[1], ['2', '0', 'inf'])

    def test_histograms(self):
        summary = self.run_command(
            'run_histograms', '--n-list', '2', '--dump-snapshots',
            '--set', 'ensemble.n_traj=50', '--set', 'ensemble.t_final=10',
            '--set', 'experiment.eval_time=10', '--set', 'experiment.bins=21',
        )
        out = self.root / 'out'
        self.assertIn('spread', summary['histograms']['2']['osc1'])
        for name in ('hist_osc1_N2.csv', 'hist_error_N2.csv'):
            rows = read_csv(out / name)
            self.assertEqual(len(rows), 1 + 21 * 21)
            self.assertAlmostEqual(sum(float(row[2]) for row in rows[1:]), 1.0, places=12)
        self.assertEqual(read_csv(out / 'hist_error_N2.csv')[0][:2], ['q_error_bin_center', 'p_error_bin_center'])
        snapshots = read_csv(out / 'N2' / 'snapshots.csv')
        self.assertEqual(snapshots[0], ['traj', 't', 'n', 're_a', 'im_a'])
        self.assertEqual(len(snapshots), 1 + 50 * 2)


class LiouvilleCommandTestCase(CommandTestCase):

    def test_outputs(self):
        summary = self.run_command('run_liouville_spectrum', '--n-list', '1,2', '--set', 'fock.cutoff=4')
        out = self.root / 'out'
        self.assertEqual(summary['spectra']['1']['zero_modes'], 1)
        self.assertEqual(summary['spectra']['2']['method'], 'dense')
        self.assertLess(summary['spectra']['2']['trace_residual'], 1e-12)
        self.assertEqual(len(read_csv(out / 'N1' / 'eigenvalues.csv')), 1 + 16)
        steady = read_csv(out / 'N2' / 'steady_state.csv')
        self.assertEqual(steady[0], ['row', 'col', 're', 'im'])
        self.assertEqual(len(steady), 1 + 16 * 16)
        trace = sum(float(row[2]) for row in steady[1:] if row[0] == row[1])
        self.assertAlmostEqual(trace, 1.0, places=10)
        self.assertEqual(ExperimentRun.objects.get().kind, ExperimentKind.LIOUVILLE_SPECTRUM)

    def test_configured_cutoff_is_checked(self):
        summary = self.run_command('run_liouville_spectrum', '--n-list', '1', '--set', 'fock.cutoff=4')
        check = summary['spectra']['1']['cutoff_check']
        self.assertEqual(check['reference_cutoff'], 3)
        self.assertFalse(summary['spectra']['1']['budget_limited'])
        self.assertIsNone(summary['adequate_cutoff'])

    def test_automatic_cutoff_is_converged(self):
        summary = self.run_command('run_liouville_spectrum', '--n-list', '1')
        spectrum = summary['spectra']['1']
        self.assertEqual(summary['adequate_cutoff'], 11)
        self.assertEqual(spectrum['cutoff'], 11)
        self.assertTrue(spectrum['cutoff_check']['converged'])
        self.assertEqual(spectrum['steady_state_method'], 'svd')
        self.assertEqual(summary['parameters']['coupling']['gamma'], 0.0)

    @tag('slow')
    def test_shipped_config_runs_every_oscillator_count(self):
        summary = self.run_command('run_liouville_spectrum', '--config', str(FEW_QUANTA))
        self.assertEqual(summary['status'], RunStatus.SUCCEEDED)
        self.assertEqual(summary['spectra']['3']['cutoff'], 8)
        self.assertEqual(summary['spectra']['3']['steady_state_method'], 'arnoldi')
        self.assertTrue(all(s['cutoff_check']['converged'] for s in summary['spectra'].values()))
        gaps = [summary['gaps'][n] for n in ('1', '2', '3')]
        self.assertGreater(gaps[0], gaps[1])
        self.assertGreater(gaps[1], gaps[2])


class RegistryTestCase(TestCase):

    def setUp(self):
        self.run = ExperimentRun.objects.create(
            kind=ExperimentKind.ORACLE_SUITE, output_dir='/tmp/out', seed='0',
        )

    def test_close(self):
        self.run.close(RunStatus.PARTIAL, EXIT_PARTIAL, summary={'failures': {'3': 'x'}}, duration=1.5)
        self.run.refresh_from_db()
        self.assertEqual(self.run.status, RunStatus.PARTIAL)
        self.assertEqual(self.run.summary, {'failures': {'3': 'x'}})
        self.assertEqual(ExperimentRun.objects.finished().count(), 1)

    def test_running_is_not_finished(self):
        self.assertFalse(ExperimentRun.objects.finished().exists())
        self.assertEqual(ExperimentRun.objects.of_kind(ExperimentKind.ORACLE_SUITE).count(), 1)

    def test_oracle_check_from_failed_report(self):
        report = OracleReport('cross_engine_N1', math.nan, math.nan, 1.0, False, provenance='error')
        check = OracleCheck.from_report(self.run, report)
        check.save()
        check.refresh_from_db()
        self.assertIsNone(check.expected)
        self.assertIsNone(check.observed)
        self.assertFalse(check.passed)
        self.assertEqual(self.run.oracle_checks.count(), 1)


@tag('slow')
class OracleSuiteCommandTestCase(CommandTestCase):

    def test_suite(self):
        summary = self.run_command('run_oracle_suite')
        self.assertTrue(summary['passed'])
        self.assertEqual(OracleCheck.objects.filter(passed=True).count(), 4)
        report = json.loads((self.root / 'out' / 'oracle_report.json').read_text(encoding='utf-8'))
        self.assertEqual(len(report), 4)

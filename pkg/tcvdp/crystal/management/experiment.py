"""
Shared plumbing for the experiment management commands.

Each command resolves its configuration, runs in a staging directory next to
the requested output directory and renames it into place when done, so a
finished directory is always complete. Progress goes to stderr through
logging; stdout only carries the JSON summary.

Exit codes: 0 success, 2 configuration or sizing problem, 3 numerical
failure, 4 partial results.
"""

import json
import logging
import os
import shutil
import subprocess
import tempfile
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.core.serializers.json import DjangoJSONEncoder
from django.utils import timezone

from crystal.configuration import ExperimentSetup, load_config
from crystal.engine.exceptions import ConfigurationError, SimulationError, SizingError
from crystal.engine.outputs import to_builtin, write_json, write_snapshots
from crystal.engine.sde import simulate_ensemble
from crystal.models import ExperimentRun, RunStatus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

MAX_FAILED_FRACTION = 0.5


class SweepError(SimulationError):
    """More than half of the oscillator counts in a sweep failed"""

    def __init__(self, failures):
        self.failures = dict(failures)
        listing = '; '.join(f'N={n}: {message}' for n, message in self.failures.items())
        super().__init__(f"{len(self.failures)} oscillator counts failed: {listing}")


def git_describe():
    """``git describe`` of the checkout, empty when unavailable"""
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty', '--tags'],
            cwd=settings.BASE_DIR,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return ''
    return result.stdout.strip() if result.returncode == 0 else ''


def parse_n_list(text):
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError as error:
        raise ConfigurationError(f"--n-list must be comma-separated integers, got {text!r}") from error
    if not values or min(values) < 1:
        raise ConfigurationError(f"--n-list needs positive oscillator counts, got {text!r}")
    return values


class ExperimentCommand(BaseCommand):
    """Base class: subclasses set ``kind`` and implement ``run``"""

    kind = None
    default_n_list = ()
    # adds --n-list
    sweep = True
    # adds --dump-snapshots
    ensemble = False

    def add_arguments(self, parser):
        parser.add_argument('--config', help='YAML configuration file')
        parser.add_argument('--out', help='Output directory (must not exist unless --force)')
        parser.add_argument(
            '--set',
            action='append',
            default=[],
            dest='overrides',
            metavar='SECTION.KEY=VALUE',
            help='Override one configuration value; repeatable, last one wins',
        )
        parser.add_argument('--workers', type=int, help='Worker processes (default: TCVDP_WORKERS)')
        parser.add_argument('--force', action='store_true', help='Replace an existing output directory')
        parser.add_argument('--dry-run', action='store_true', help='Resolve and size the run, write nothing')
        if self.sweep:
            parser.add_argument('--n-list', help='Comma-separated oscillator counts')
        if self.ensemble:
            parser.add_argument(
                '--dump-snapshots', action='store_true',
                help='Write every trajectory at the snapshot times to snapshots.csv',
            )

    def command_defaults(self):
        """Configuration values this command uses unless the file or --set says otherwise"""
        return None

    def run(self, setup, directory, options):
        raise NotImplementedError

    def describe(self, setup, options):
        """Plan printed by --dry-run"""
        return {'n_list': self.n_list(setup)}

    def outcome(self, summary):
        if self.failures:
            return RunStatus.PARTIAL, EXIT_PARTIAL
        return RunStatus.SUCCEEDED, EXIT_OK

    # helpers for subclasses

    def n_list(self, setup):
        return setup.n_list(self.default_n_list)

    def sweep_over(self, n_list, task):
        """Run ``task(n)`` for every N; numerical failures of single N values are tolerated"""
        results = {}
        failures = {}
        for n in n_list:
            logger.info("%s: N=%d", self.kind, n)
            try:
                results[n] = task(n)
            except (ConfigurationError, SizingError):
                raise
            except SimulationError as error:
                logger.warning("%s: N=%d failed: %s", self.kind, n, error)
                failures[n] = str(error)
        if len(failures) > MAX_FAILED_FRACTION * len(n_list):
            raise SweepError(failures)
        self.failures.update(failures)
        return results

    def n_directory(self, directory, n):
        path = Path(directory) / f'N{n}'
        path.mkdir(exist_ok=True)
        return path

    # command flow

    def handle(self, *args, **options):
        self.failures = {}
        self.options = options
        try:
            setup = self.resolve(options)
        except ConfigurationError as error:
            raise CommandError(str(error), returncode=EXIT_CONFIGURATION)
        self.workers = max(1, options.get('workers') or settings.TCVDP_WORKERS)

        if options['dry_run']:
            try:
                plan = self.describe(setup, options)
            except (ConfigurationError, SizingError) as error:
                raise CommandError(str(error), returncode=EXIT_CONFIGURATION)
            self.emit({'kind': self.kind, 'dry_run': True, 'config': setup.tree, **plan})
            return

        out = self.output_directory(options)
        if out.exists() and not options['force']:
            raise CommandError(
                f"{out} already exists (use --force to replace it)", returncode=EXIT_CONFIGURATION
            )
        out.parent.mkdir(parents=True, exist_ok=True)

        record = ExperimentRun.objects.create(
            kind=self.kind,
            output_dir=str(out),
            config=to_builtin(setup.tree),
            seed=str(setup.seed),
            workers=self.workers,
            git_describe=git_describe(),
        )
        self.record = record
        staging = Path(tempfile.mkdtemp(prefix=f'.{out.name}.', dir=out.parent))
        started = time.perf_counter()
        logger.info("%s: run %d staging in %s", self.kind, record.pk, staging)

        try:
            summary = self.run(setup, staging, options)
        except (ConfigurationError, SizingError) as error:
            self.abort(record, staging, started, error, EXIT_CONFIGURATION)
        except SimulationError as error:
            self.abort(record, staging, started, error, EXIT_NUMERICAL)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            record.close(RunStatus.FAILED, EXIT_NUMERICAL, duration=time.perf_counter() - started)
            raise

        status, code = self.outcome(summary)
        duration = time.perf_counter() - started
        summary = {
            'kind': self.kind,
            'run': record.pk,
            'status': status,
            'exit_code': code,
            'output_dir': str(out),
            **summary,
        }
        if self.failures:
            summary['failures'] = self.failures

        files = sorted(
            str(path.relative_to(staging)) for path in staging.rglob('*') if path.is_file()
        )
        write_json(staging / 'manifest.json', {
            'kind': self.kind,
            'config': setup.tree,
            'git_describe': record.git_describe,
            'seed': record.seed,
            'workers': self.workers,
            'started_at': record.started_at,
            'duration': duration,
            'status': status,
            'files': files,
        }, encoder=DjangoJSONEncoder)

        if out.exists():
            shutil.rmtree(out)
        os.replace(staging, out)
        record.close(status, code, summary=to_builtin(summary), duration=duration)
        self.emit(summary)

        if code != EXIT_OK:
            raise CommandError(f"{self.kind} finished with status {status}", returncode=code)
        logger.info("%s: done in %.1f s, results in %s", self.kind, duration, out)

    def resolve(self, options):
        overrides = list(options.get('overrides') or [])
        if options.get('n_list'):
            n_list = parse_n_list(options['n_list'])
            overrides.append(f"experiment.n_list=[{', '.join(map(str, n_list))}]")
        tree = load_config(options.get('config'), overrides, self.command_defaults())
        return ExperimentSetup.from_tree(tree)

    def output_directory(self, options):
        if options.get('out'):
            return Path(options['out']).resolve()
        stamp = timezone.now().strftime('%Y%m%d-%H%M%S')
        return Path(settings.TCVDP_OUTPUT_ROOT) / f'{self.kind}-{stamp}'

    def abort(self, record, staging, started, error, code):
        shutil.rmtree(staging, ignore_errors=True)
        record.close(
            RunStatus.FAILED, code, summary={'error': str(error)},
            duration=time.perf_counter() - started,
        )
        raise CommandError(str(error), returncode=code) from error

    def emit(self, payload):
        self.stdout.write(json.dumps(to_builtin(payload), cls=DjangoJSONEncoder, sort_keys=True))

    # shared settings

    @property
    def memory_budget(self):
        return settings.TCVDP_MEMORY_BUDGET_MB * 2**20

    @property
    def dense_limit(self):
        return settings.TCVDP_DENSE_LIMIT


class EnsembleCommand(ExperimentCommand):
    """Experiment built from Langevin ensembles, one per oscillator count"""

    ensemble = True

    def ensemble_config(self, setup, n, snapshot_times=()):
        t_final = setup.tree['ensemble']['t_final']
        if not t_final:
            raise ConfigurationError("ensemble.t_final must be > 0 for this experiment")
        times = set(setup.tree['ensemble']['snapshot_times']) | set(snapshot_times)
        if self.options.get('dump_snapshots') and not times:
            times = {t_final}
        return setup.ensemble(n, snapshot_times=tuple(sorted(times)))

    def simulate(self, setup, n, directory, snapshot_times=()):
        config = self.ensemble_config(setup, n, snapshot_times)
        record = simulate_ensemble(config, setup.oscillator, setup.coupling, workers=self.workers)
        if self.options.get('dump_snapshots'):
            write_snapshots(self.n_directory(directory, n) / 'snapshots.csv', record)
        return record

    def describe(self, setup, options):
        plan = []
        for n in self.n_list(setup):
            config = self.ensemble_config(setup, n)
            plan.append({
                'N': n,
                'n_traj': config.n_traj,
                'n_steps': config.n_steps,
                'n_blocks': config.n_blocks,
                'records': len(config.record_steps()),
            })
        return {'n_list': self.n_list(setup), 'ensembles': plan}

from crystal.engine.oracle import run_suite
from crystal.engine.outputs import write_json
from crystal.management.experiment import EXIT_NUMERICAL, ExperimentCommand
from crystal.models import ExperimentKind, OracleCheck, RunStatus

CHECKS = (
    'deterministic_limit_cycle',
    'diagonal_sector_steady_state',
    'cross_engine_N1',
    'frozen_population_fixture',
)


class Command(ExperimentCommand):
    help = 'Run the brute-force oracles that both engines must agree with'

    kind = ExperimentKind.ORACLE_SUITE
    sweep = False

    def command_defaults(self):
        return {'ensemble': {'n_traj': 1000}}

    def describe(self, setup, options):
        return {'checks': list(CHECKS), 'n_traj': setup.tree['ensemble']['n_traj']}

    def run(self, setup, directory, options):
        reports = run_suite(
            n_traj=setup.tree['ensemble']['n_traj'],
            seed=setup.seed,
            workers=self.workers,
            memory_budget=self.memory_budget,
        )
        write_json(directory / 'oracle_report.json', [report.to_dict() for report in reports])
        OracleCheck.objects.bulk_create(
            [OracleCheck.from_report(self.record, report) for report in reports]
        )
        for report in reports:
            style = self.style.SUCCESS if report.passed else self.style.ERROR
            self.stderr.write(style(f"{report.name}: {'passed' if report.passed else 'FAILED'}"))

        self.failed_checks = [report.name for report in reports if not report.passed]
        return {
            'checks': {
                report.name: {
                    'expected': report.expected,
                    'observed': report.observed,
                    'tolerance': report.tolerance,
                    'passed': report.passed,
                }
                for report in reports
            },
            'passed': not self.failed_checks,
        }

    def outcome(self, summary):
        if self.failed_checks:
            return RunStatus.FAILED, EXIT_NUMERICAL
        return super().outcome(summary)

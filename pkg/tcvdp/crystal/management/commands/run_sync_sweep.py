import logging
import math

from crystal.engine.exceptions import ConfigurationError
from crystal.engine.observables import (
    linear_fit,
    quadrature_spread,
    sync_measure,
    sync_series,
    uncorrelated_baseline,
)
from crystal.engine.outputs import write_sync
from crystal.management.experiment import EnsembleCommand
from crystal.models import ExperimentKind

logger = logging.getLogger(__name__)


class Command(EnsembleCommand):
    help = 'Multi-body synchronization measure S_c(N, t) as a function of 1/N'

    kind = ExperimentKind.SYNC_SWEEP
    default_n_list = (2, 5, 10, 20, 50)

    def command_defaults(self):
        return {'ensemble': {'t_final': 10000.0}}

    def run(self, setup, directory, options):
        n_list = self.n_list(setup)
        if min(n_list) < 2:
            raise ConfigurationError("synchronization needs at least two oscillators per ring")
        t_eval = setup.experiment['eval_time']
        rows = []

        def measure(n):
            record = self.simulate(setup, n, directory)
            times, values = sync_series(record)
            rows.extend((n, t, value) for t, value in zip(times, values))
            result = sync_measure(record, t_eval)
            dq, dp = quadrature_spread(record, t_eval)
            if result.degenerate:
                logger.warning("N=%d: error mode collapsed at t=%g, S_c is infinite", n, result.t)
            return {
                's_c': result.value,
                'error_variance': result.error_variance,
                'sentinel': result.degenerate,
                'dq': dq,
                'dp': dp,
                'baseline': float(uncorrelated_baseline(n)),
            }

        results = self.sweep_over(n_list, measure)
        write_sync(directory / 'sync.csv', rows)

        summary = {'eval_time': t_eval, 'measures': results}
        finite = {n: r['s_c'] for n, r in results.items() if math.isfinite(r['s_c'])}
        excluded = sorted(set(results) - set(finite))
        if excluded:
            summary['excluded_from_fit'] = excluded
        if len(finite) >= 2:
            line = linear_fit([1.0 / n for n in finite], list(finite.values()))
            summary['fit'] = {
                'slope': line.slope,
                'intercept': line.intercept,
                'r_squared': line.r_squared,
            }
            logger.info("S_c = %.4g / N + %.4g (R^2=%.4f)", line.slope, line.intercept, line.r_squared)
        return summary

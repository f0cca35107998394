import logging

from crystal.engine.observables import (
    angular_anisotropy,
    histogram_points,
    marginal_excess_kurtosis,
    phase_space_points,
    spread,
)
from crystal.engine.outputs import write_histogram
from crystal.management.experiment import EnsembleCommand
from crystal.models import ExperimentKind

logger = logging.getLogger(__name__)


class Command(EnsembleCommand):
    help = 'Phase-space histograms of oscillator 1 and of the error mode'

    kind = ExperimentKind.HISTOGRAMS
    default_n_list = (2, 50)

    def command_defaults(self):
        return {'ensemble': {'t_final': 10000.0}}

    def run(self, setup, directory, options):
        experiment = setup.experiment
        t_eval = experiment['eval_time']

        def diagnostics(q, p):
            kurtosis_q, kurtosis_p = marginal_excess_kurtosis(q, p)
            return {
                'kurtosis_q': kurtosis_q,
                'kurtosis_p': kurtosis_p,
                'anisotropy': angular_anisotropy(q, p),
                'spread': spread(q, p),
            }

        def histograms(n):
            record = self.simulate(setup, n, directory, snapshot_times=(t_eval,))
            result = {}
            modes = ('oscillator', 'error') if n >= 2 else ('oscillator',)
            for mode in modes:
                q, p = phase_space_points(record, t_eval, mode)
                histogram = histogram_points(
                    q, p, bins=experiment['bins'], extent=experiment['hist_range'], mode=mode, t=t_eval,
                )
                tag = 'osc1' if mode == 'oscillator' else 'error'
                write_histogram(directory / f'hist_{tag}_N{n}.csv', histogram)
                result[tag] = diagnostics(q, p)
            return result

        return {'eval_time': t_eval, 'histograms': self.sweep_over(self.n_list(setup), histograms)}

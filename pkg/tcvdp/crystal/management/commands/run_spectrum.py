import logging

from crystal.engine.observables import power_spectrum
from crystal.engine.outputs import write_spectrum
from crystal.forms import SPECTRUM_WINDOWS
from crystal.management.experiment import EnsembleCommand
from crystal.models import ExperimentKind

logger = logging.getLogger(__name__)


class Command(EnsembleCommand):
    help = 'Power spectrum of the order parameter and its line width over an N sweep'

    kind = ExperimentKind.SPECTRUM
    default_n_list = (4, 32)

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--window', choices=SPECTRUM_WINDOWS,
            help='Taper applied before the transform (default: experiment.window)',
        )

    def command_defaults(self):
        return {'ensemble': {'n_traj': 1000, 't_final': 5000.0}}

    def run(self, setup, directory, options):
        window = options.get('window') or setup.experiment['window']

        def line(n):
            record = self.simulate(setup, n, directory)
            spectrum = power_spectrum(record.times, record.mean_field, window=window)
            write_spectrum(self.n_directory(directory, n) / 'spectrum.csv', spectrum)
            logger.info(
                "N=%d: peak at %.6g, FWHM %.4g", n, spectrum.peak_frequency, spectrum.fwhm
            )
            return spectrum

        spectra = self.sweep_over(self.n_list(setup), line)
        return {
            'window': window,
            'spectra': {
                n: {
                    'peak_frequency': spectrum.peak_frequency,
                    'fwhm': spectrum.fwhm,
                    'total_power': float(spectrum.power.sum()),
                    'series_power': spectrum.series_power,
                    'parseval_residual': spectrum.parseval_residual,
                }
                for n, spectrum in spectra.items()
            },
        }

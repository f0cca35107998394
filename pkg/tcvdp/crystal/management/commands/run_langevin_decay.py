import logging

from crystal.engine.exceptions import ConfigurationError, PhaseUndefinedError, TimeLookupError
from crystal.engine.observables import (
    fit_decay,
    linear_fit,
    order_parameter_series,
    phase_fluctuation,
)
from crystal.engine.outputs import write_gamma_fits, write_order_parameter, write_phase_fluctuations
from crystal.management.experiment import EnsembleCommand
from crystal.models import ExperimentKind

logger = logging.getLogger(__name__)

MIN_TRAJECTORIES = 100


class Command(EnsembleCommand):
    help = 'Decay of the order parameter and its effective rate Gamma over an N sweep'

    kind = ExperimentKind.LANGEVIN_DECAY
    default_n_list = (4, 8, 16, 32)

    def command_defaults(self):
        return {'ensemble': {'t_final': 5000.0}}

    def run(self, setup, directory, options):
        n_traj = setup.tree['ensemble']['n_traj']
        if n_traj < MIN_TRAJECTORIES:
            raise ConfigurationError(
                f"decay fits need at least {MIN_TRAJECTORIES} trajectories, got n_traj={n_traj}"
            )
        experiment = setup.experiment
        kappa1 = setup.oscillator.kappa1
        window = None
        if experiment['fit_start'] is not None:
            window = (experiment['fit_start'], experiment['fit_end'])

        phase_rows = []

        def decay(n):
            record = self.simulate(setup, n, directory)
            times, series = order_parameter_series(record)
            write_order_parameter(self.n_directory(directory, n) / 'order_parameter.csv', times, series)

            try:
                phase = phase_fluctuation(record, 1, experiment['phase_time'])
            except (PhaseUndefinedError, TimeLookupError) as error:
                logger.warning("N=%d: no phase fluctuation at t=%g: %s", n, experiment['phase_time'], error)
            else:
                if phase.is_sentinel:
                    logger.warning("N=%d: phase is uniformly spread at t=%g", n, phase.t)
                phase_rows.append((n, phase.t, phase.value, phase.stderr))

            fit = fit_decay(record, kappa1, window)
            logger.info(
                "N=%d: Gamma=%.4g (Gamma/kappa1=%.4g, R^2=%.4f)",
                n, fit.gamma_eff, fit.gamma_eff / kappa1, fit.r_squared,
            )
            return fit

        fits = self.sweep_over(self.n_list(setup), decay)
        write_gamma_fits(directory / 'gamma_fits.csv', [
            (n, fit.gamma_eff, fit.gamma_eff / kappa1, fit.r_squared) for n, fit in fits.items()
        ])
        write_phase_fluctuations(directory / 'phase_fluctuations.csv', phase_rows)

        summary = {
            'fits': {
                n: {
                    'gamma': fit.gamma_eff,
                    'gamma_over_kappa1': fit.gamma_eff / kappa1,
                    'gamma_stderr': fit.gamma_stderr,
                    'r_squared': fit.r_squared,
                    'window': fit.window,
                }
                for n, fit in fits.items()
            },
            'phase_fluctuations': {n: {'t': t, 'value': v, 'stderr': s} for n, t, v, s in phase_rows},
        }
        if len(fits) >= 2:
            line = linear_fit(
                [1.0 / n for n in fits], [fit.gamma_eff / kappa1 for fit in fits.values()]
            )
            summary['scaling'] = {
                'slope': line.slope,
                'intercept': line.intercept,
                'r_squared': line.r_squared,
                'slope_stderr': line.slope_stderr,
            }
        return summary

import logging

from crystal.engine.exceptions import ConfigurationError, CutoffConvergenceError
from crystal.engine.lindblad import (
    build_liouvillian,
    check_gap_convergence,
    fitting_cutoff,
    minimal_cutoff,
    mode_occupations,
    spectrum,
    steady_state,
    steady_state_method,
)
from crystal.engine.outputs import write_eigenvalues, write_steady_state
from crystal.management.experiment import ExperimentCommand
from crystal.models import ExperimentKind

logger = logging.getLogger(__name__)

# strong two-quantum loss keeps every oscillator within a few quanta
REFERENCE_PARAMETERS = {
    'oscillator': {'kappa1': 0.1, 'kappa2': 0.2, 'drive_re': 0.0, 'drive_im': 0.0},
    'coupling': {'mu': 0.3, 'gamma': 0.0},
}


class Command(ExperimentCommand):
    help = 'Liouvillian spectrum and steady state of the quantum ring for each N'

    kind = ExperimentKind.LIOUVILLE_SPECTRUM
    default_n_list = (1, 2, 3)

    def command_defaults(self):
        return {section: dict(values) for section, values in REFERENCE_PARAMETERS.items()}

    def parameters(self, setup):
        """Effective model parameters; departures from the reference point are logged"""
        effective = {
            'oscillator': dict(setup.tree['oscillator']),
            'coupling': dict(setup.tree['coupling']),
        }
        for section, values in REFERENCE_PARAMETERS.items():
            for name, reference in values.items():
                if effective[section][name] != reference:
                    logger.warning(
                        "%s.%s=%g differs from the reference value %g",
                        section, name, effective[section][name], reference,
                    )
        return effective

    def adequate_cutoff(self, setup):
        report = minimal_cutoff(setup.oscillator, memory_budget=self.memory_budget)
        logger.info(
            "Smallest adequate cutoff d=%d (terminal population %.2g, drift %.2g)",
            report.cutoff, report.terminal_population, report.drift,
        )
        return report.cutoff

    def fock_spaces(self, setup):
        """Fock configuration per N; every N is sized before anything is allocated

        A configured cutoff is used for every N and must fit the memory budget.
        Otherwise each N gets the largest cutoff up to the adequate single-mode
        cutoff that fits.
        """
        configured = setup.tree['fock']['cutoff']
        n_list = self.n_list(setup)
        if not configured:
            adequate = self.adequate_cutoff(setup)
            spaces = {
                n: fitting_cutoff(n, adequate, memory_budget=self.memory_budget, dense_limit=self.dense_limit)
                for n in n_list
            }
            for n, fock in spaces.items():
                if fock.cutoff < adequate:
                    logger.warning("N=%d: cutoff lowered to d=%d by the memory budget", n, fock.cutoff)
            return spaces, adequate

        spaces = {
            n: setup.fock(n, configured, memory_budget=self.memory_budget, dense_limit=self.dense_limit)
            for n in n_list
        }
        too_large = []
        for n, fock in spaces.items():
            report = fock.sizing()
            logger.info(
                "N=%d, d=%d: Liouville dimension %d, %s path, %.1f MiB",
                n, configured, report.liouville_dim, report.path, report.required_bytes / 2**20,
            )
            if not report.fits:
                too_large.append(
                    f"N={n} needs {report.required_bytes / 2**20:.1f} MiB "
                    f"(budget {report.budget_bytes / 2**20:.1f} MiB)"
                )
        if too_large:
            raise ConfigurationError("Liouvillian too large: " + '; '.join(too_large))
        return spaces, None

    def describe(self, setup, options):
        spaces, adequate = self.fock_spaces(setup)
        return {
            'n_list': list(spaces),
            'adequate_cutoff': adequate,
            'cutoffs': {n: fock.cutoff for n, fock in spaces.items()},
            'sizing': {n: fock.sizing().to_dict() for n, fock in spaces.items()},
            'parameters': self.parameters(setup),
        }

    def run(self, setup, directory, options):
        parameters = self.parameters(setup)
        spaces, adequate = self.fock_spaces(setup)
        n_eigs = setup.tree['fock']['n_eigs']

        def diagonalize(n):
            fock = spaces[n]
            liouvillian = build_liouvillian(setup.oscillator, setup.coupling, fock)
            result = spectrum(liouvillian, k=n_eigs)
            target = self.n_directory(directory, n)
            write_eigenvalues(target / 'eigenvalues.csv', result)
            method = steady_state_method(liouvillian)
            rho = steady_state(liouvillian, method)
            write_steady_state(target / 'steady_state.csv', rho)
            trace_residual = liouvillian.adjoint_identity_residual()
            logger.info("N=%d: gap %.6g, %d zero mode(s)", n, result.gap, result.zero_modes)
            del liouvillian

            if fock.cutoff > 2:
                check = check_gap_convergence(setup.oscillator, setup.coupling, fock, result=result)
                if not check.converged:
                    if adequate is not None:
                        raise CutoffConvergenceError(check)
                    logger.warning("N=%d: configured cutoff d=%d is not converged", n, fock.cutoff)
                cutoff_check = check.to_dict()
            else:
                logger.warning("N=%d: no smaller cutoff to check d=%d against", n, fock.cutoff)
                cutoff_check = None

            return {
                'cutoff': fock.cutoff,
                'budget_limited': adequate is not None and fock.cutoff < adequate,
                'cutoff_check': cutoff_check,
                'gap': result.gap,
                'zero_modes': result.zero_modes,
                'method': result.method,
                'steady_state_method': method,
                'eigenvalues': len(result.eigenvalues),
                'occupations': mode_occupations(rho, fock),
                'trace_residual': trace_residual,
            }

        results = self.sweep_over(list(spaces), diagonalize)
        return {
            'parameters': parameters,
            'adequate_cutoff': adequate,
            'spectra': results,
            'gaps': {n: r['gap'] for n, r in results.items()},
        }

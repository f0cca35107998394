"""
Exception hierarchy for the simulation engine.

Management commands map these onto exit codes: configuration and sizing
problems exit with 2, numerical failures with 3.
"""


class SimulationError(Exception):
    """Base class for every error raised by the engine"""


class ConfigurationError(SimulationError, ValueError):
    """Invalid parameters, out-of-range indices or unsupported options"""


class DivergenceError(SimulationError):

    def __init__(self, traj_index, time, message=None):
        self.traj_index = traj_index
        self.time = time
        super().__init__(
            message or f"trajectory {traj_index} diverged at t={time:.6g}"
        )


class EnsembleDivergenceError(SimulationError):

    def __init__(self, failures, n_traj):
        self.failures = list(failures)
        self.n_traj = n_traj
        super().__init__(
            f"{len(self.failures)} of {n_traj} trajectories diverged "
            f"(first: {self.failures[:5]})"
        )


class TimeLookupError(SimulationError, LookupError):
    """Requested time is not on the recorded grid"""


class FitError(SimulationError):
    """Decay fit could not be performed on the requested window"""


class PhaseUndefinedError(SimulationError):
    """Too many trajectories have a near-zero modulus to define a phase"""


class SpectrumError(SimulationError):
    """Series is too short or not uniformly sampled"""


class HistogramError(SimulationError):
    """No samples to histogram"""


class SizingError(SimulationError):

    def __init__(self, hilbert_dim, liouville_dim, required_bytes, budget_bytes):
        self.hilbert_dim = hilbert_dim
        self.liouville_dim = liouville_dim
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes
        super().__init__(
            f"Liouvillian of dimension {liouville_dim} (Hilbert dimension {hilbert_dim}) "
            f"needs {required_bytes / 2**20:.1f} MiB, budget is {budget_bytes / 2**20:.1f} MiB"
        )


class EigensolverError(SimulationError):

    def __init__(self, message, residuals=None):
        self.residuals = [] if residuals is None else list(residuals)
        super().__init__(message)


class DegenerateSteadyStateError(SimulationError):

    def __init__(self, kernel_dim):
        self.kernel_dim = kernel_dim
        if kernel_dim is None:
            super().__init__("zero eigenvalue is degenerate (singular steady-state system)")
        else:
            super().__init__(f"zero eigenvalue is {kernel_dim}-fold degenerate")


class CutoffConvergenceError(SimulationError):

    def __init__(self, check):
        self.check = check
        super().__init__(
            f"gap changes by {check.relative_change:.2g} between d={check.reference_cutoff} "
            f"and d={check.cutoff} (tolerance {check.tolerance:g})"
        )


class StepControlError(SimulationError):

    def __init__(self, time, message=""):
        self.time = time
        super().__init__(f"step control failed at t={time:.6g}: {message}".rstrip(": "))


class OracleError(SimulationError):
    """Oracle precondition not met or oracle computation did not converge"""

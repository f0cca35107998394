"""
Numerical engine: Langevin ensembles, observables and the master equation.

Nothing in this package imports Django, so worker processes stay light.
"""

from .exceptions import (
    ConfigurationError,
    DegenerateSteadyStateError,
    DivergenceError,
    EigensolverError,
    EnsembleDivergenceError,
    FitError,
    HistogramError,
    OracleError,
    PhaseUndefinedError,
    SimulationError,
    SizingError,
    SpectrumError,
    StepControlError,
    TimeLookupError,
)
from .lindblad import (
    FockConfig,
    Liouvillian,
    annihilation,
    build_hamiltonian,
    build_liouvillian,
    dissipator,
    evolve_rho,
    spectrum,
    steady_state,
    validate_cutoff,
)
from .model import (
    CouplingSpec,
    EnsembleConfig,
    OscillatorParams,
    coupling_matrix,
    limit_cycle_radius,
    normalization,
    ring_distance,
)
from .observables import (
    fit_gamma,
    order_parameter,
    phase_fluctuation,
    phase_space_histogram,
    power_spectrum,
    sync_measure,
)
from .oracle import (
    OracleReport,
    cross_engine_check,
    deterministic_limit_cycle,
    single_vdp_steady_distribution,
)
from .sde import (
    EnsembleRecord,
    TrajectoryState,
    drift,
    simulate_ensemble,
    simulate_trajectory,
    step,
)

__all__ = [
    'ConfigurationError',
    'CouplingSpec',
    'DegenerateSteadyStateError',
    'DivergenceError',
    'EigensolverError',
    'EnsembleConfig',
    'EnsembleDivergenceError',
    'EnsembleRecord',
    'FitError',
    'FockConfig',
    'HistogramError',
    'Liouvillian',
    'OracleError',
    'OracleReport',
    'OscillatorParams',
    'PhaseUndefinedError',
    'SimulationError',
    'SizingError',
    'SpectrumError',
    'StepControlError',
    'TimeLookupError',
    'TrajectoryState',
    'annihilation',
    'build_hamiltonian',
    'build_liouvillian',
    'coupling_matrix',
    'cross_engine_check',
    'deterministic_limit_cycle',
    'dissipator',
    'drift',
    'evolve_rho',
    'fit_gamma',
    'limit_cycle_radius',
    'normalization',
    'order_parameter',
    'phase_fluctuation',
    'phase_space_histogram',
    'power_spectrum',
    'ring_distance',
    'simulate_ensemble',
    'simulate_trajectory',
    'single_vdp_steady_distribution',
    'spectrum',
    'steady_state',
    'step',
    'sync_measure',
    'validate_cutoff',
]

"""
Physical parameters and ring coupling topology for arrays of van der Pol oscillators.

Site indices in the public API are 1-based.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

# dt * (fastest rate) must stay below this for the Euler-Maruyama step
STABILITY_LIMIT = 0.05

TOPOLOGIES = ('ring',)
PAIR_NOISE_MODES = ('pairwise', 'factored')
INITIAL_PHASE_MODES = ('fixed', 'uniform')


def _finite(name, value):
    if not np.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class OscillatorParams:
    """Rates of one oscillator: frequency, linear gain, two-quantum loss and drive"""

    omega: float = 1.0
    kappa1: float = 0.1
    kappa2: float = 0.005
    drive: complex = 0j

    def __post_init__(self):
        for name in ('omega', 'kappa1', 'kappa2'):
            _finite(name, getattr(self, name))
        _finite('drive', complex(self.drive))
        if self.kappa1 < 0:
            raise ConfigurationError(f"kappa1 must be >= 0, got {self.kappa1}")
        if self.kappa2 < 0:
            raise ConfigurationError(f"kappa2 must be >= 0, got {self.kappa2}")
        object.__setattr__(self, 'drive', complex(self.drive))

    @property
    def has_limit_cycle(self):
        return self.kappa2 > 0


def limit_cycle_radius(params):
    """Deterministic amplitude sqrt(kappa1 / (2 kappa2))"""
    if params.kappa2 <= 0:
        raise ConfigurationError("a limit cycle needs kappa2 > 0")
    return math.sqrt(params.kappa1 / (2.0 * params.kappa2))


@dataclass(frozen=True)
class CouplingSpec:
    mu: float = 0.3
    gamma: float = 0.0
    topology: str = 'ring'

    def __post_init__(self):
        _finite('mu', self.mu)
        if self.mu < 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        # gamma = inf is allowed: nearest-neighbour limit
        if math.isnan(self.gamma) or self.gamma < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if self.topology not in TOPOLOGIES:
            raise ConfigurationError(
                f"unsupported topology {self.topology!r}, expected one of {TOPOLOGIES}"
            )


@dataclass(frozen=True)
class EnsembleConfig:
    n_osc: int = 1
    n_traj: int = 1
    dt: float = 0.01
    t_final: float = 0.0
    seed: int = 0
    record_stride: int = 1
    block_size: int = 64
    pair_noise: str = 'factored'
    noise_scale: float = 1.0
    extra_noise_variance: float = 0.0
    initial_phase: str = 'fixed'
    initial_amplitude: float = None
    record_all_sites: bool = False
    snapshot_times: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if int(self.n_osc) != self.n_osc or self.n_osc < 1:
            raise ConfigurationError(f"n_osc must be an integer >= 1, got {self.n_osc}")
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ConfigurationError(f"n_traj must be an integer >= 1, got {self.n_traj}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        _finite('t_final', self.t_final)
        if self.t_final != 0 and self.t_final < self.dt:
            raise ConfigurationError(
                f"t_final must be 0 or >= dt, got t_final={self.t_final}, dt={self.dt}"
            )
        if self.t_final < 0:
            raise ConfigurationError(f"t_final must be >= 0, got {self.t_final}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigurationError(f"record_stride must be >= 1, got {self.record_stride}")
        if int(self.block_size) != self.block_size or self.block_size < 1:
            raise ConfigurationError(f"block_size must be >= 1, got {self.block_size}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.pair_noise not in PAIR_NOISE_MODES:
            raise ConfigurationError(
                f"pair_noise must be one of {PAIR_NOISE_MODES}, got {self.pair_noise!r}"
            )
        if self.initial_phase not in INITIAL_PHASE_MODES:
            raise ConfigurationError(
                f"initial_phase must be one of {INITIAL_PHASE_MODES}, got {self.initial_phase!r}"
            )
        if not (np.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ConfigurationError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not (np.isfinite(self.extra_noise_variance) and self.extra_noise_variance >= 0):
            raise ConfigurationError(
                f"extra_noise_variance must be >= 0, got {self.extra_noise_variance}"
            )
        if self.initial_amplitude is not None:
            _finite('initial_amplitude', self.initial_amplitude)
            if self.initial_amplitude < 0:
                raise ConfigurationError("initial_amplitude must be >= 0")
        object.__setattr__(self, 'n_osc', int(self.n_osc))
        object.__setattr__(self, 'n_traj', int(self.n_traj))
        object.__setattr__(self, 'record_stride', int(self.record_stride))
        object.__setattr__(self, 'block_size', int(self.block_size))
        object.__setattr__(self, 'seed', int(self.seed))
        snapshots = tuple(float(t) for t in self.snapshot_times)
        for t in snapshots:
            if t < 0 or t > self.t_final + 1e-9 * max(1.0, self.t_final):
                raise ConfigurationError(f"snapshot time {t} outside [0, t_final]")
        object.__setattr__(self, 'snapshot_times', snapshots)

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def n_blocks(self):
        return -(-self.n_traj // self.block_size)

    def record_steps(self):
        return np.arange(0, self.n_steps + 1, self.record_stride, dtype=np.int64)

    def record_times(self):
        return self.record_steps() * self.dt

    def snapshot_steps(self):
        """Integration steps at which full amplitude snapshots are taken"""
        steps = []
        for t in self.snapshot_times:
            step = int(round(t / self.dt))
            if not math.isclose(step * self.dt, t, rel_tol=1e-9, abs_tol=1e-12):
                raise ConfigurationError(f"snapshot time {t} is not a multiple of dt={self.dt}")
            steps.append(min(step, self.n_steps))
        return tuple(sorted(set(steps)))


def ring_distance(m, n, N):
    """Shortest path between sites m and n on a periodic ring of N sites"""
    for index in (m, n):
        if int(index) != index or not 1 <= index <= N:
            raise ConfigurationError(f"site index {index} outside 1..{N}")
    delta = abs(m - n)
    return min(delta, N - delta)


def _distance_matrix(N):
    sites = np.arange(N)
    delta = np.abs(sites[:, None] - sites[None, :])
    return np.minimum(delta, N - delta)


def _attenuation(gamma, distance):
    # lambda_mn(gamma) without the mu prefactor; zero on the diagonal
    weights = (distance == 1).astype(float)
    far = distance > 1
    weights[far] = np.exp(-gamma * (distance[far] - 1))
    return weights


def coupling_matrix(spec, N):
    """Symmetric N x N matrix mu_mn = mu (1 - delta_mn) exp(-gamma (d_mn - 1))"""
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    return spec.mu * _attenuation(spec.gamma, _distance_matrix(N))


def normalization(spec, N):
    """Sum of lambda_1m over the ring plus the restored self term; equals N for gamma = 0"""
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    return float(_attenuation(spec.gamma, _distance_matrix(N))[0].sum() + 1.0)


def laplacian(spec, N):
    """Weighted graph Laplacian of mu_mn / normalization"""
    weights = coupling_matrix(spec, N) / normalization(spec, N)
    return np.diag(weights.sum(axis=1)) - weights


def stability_product(config, params, coupling):
    """dt times the fastest deterministic rate of the Langevin drift"""
    saturation = params.kappa1 / 2.0 if params.kappa2 > 0 else 0.0
    return config.dt * max(abs(params.omega), params.kappa1, saturation, coupling.mu)


def check_stability(config, params, coupling):
    product = stability_product(config, params, coupling)
    if product > STABILITY_LIMIT:
        raise ConfigurationError(
            f"dt={config.dt} violates the stability guard "
            f"(dt * max rate = {product:.4g} > {STABILITY_LIMIT})"
        )
    return product

"""
Semiclassical Langevin dynamics for rings of van der Pol oscillators.

Each amplitude obeys

    da_n = [-i w a_n - i conj(W) + a_n (k1 - 2 k2 |a_n|^2) + sum_m (mu_mn / N)(a_m - a_n)] dt
           + sqrt(3 k1 + 2 k2) dW_n + pair noise

integrated with Euler-Maruyama. The free rotation -i w a_n is applied exactly after each
update, which keeps the deterministic limit-cycle radius free of O(w^2 dt) bias.

Trajectories are integrated block by block (see ``noise``); ensemble moments are
summed per block and merged in block order, so the result does not depend on the
number of worker processes. The step loop itself is compiled with numba; noise is
drawn a chunk of steps at a time and mapped onto sites with one matrix product.
"""

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
from numba import njit

from .exceptions import ConfigurationError, DivergenceError, EnsembleDivergenceError, TimeLookupError
from .model import check_stability, coupling_matrix, laplacian, normalization
from .noise import NoiseSource

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 100.0
MAX_DIVERGED_FRACTION = 1e-3
NEAR_ZERO_MODULUS = 1e-6


@dataclass(frozen=True)
class TrajectoryState:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(amplitudes)):
            raise DivergenceError(-1, self.time, "trajectory state holds non-finite amplitudes")
        amplitudes.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amplitudes)

    @property
    def n_osc(self):
        return self.amplitudes.size


def _amplitudes(state):
    if isinstance(state, TrajectoryState):
        return state.amplitudes
    return np.asarray(state, dtype=complex)


def drift(state, params, coupling, norm):
    """Deterministic part of the Langevin equation

    ``coupling`` is the N x N matrix mu_mn and ``norm`` its normalization.
    Works on a single state or on any array whose last axis runs over sites.
    """
    a = _amplitudes(state)
    weights = np.asarray(coupling, dtype=float) / norm
    exchange = a @ weights - a * weights.sum(axis=1)
    return (
        -1j * params.omega * a
        - 1j * np.conj(params.drive)
        + a * (params.kappa1 - 2.0 * params.kappa2 * np.abs(a) ** 2)
        + exchange
    )


@njit(cache=True)
def _em_steps(a, kicks, noisy, n_steps, dt, rotation, kappa1, kappa2, drive_term,
              weights, row_sums, uniform, uniform_weight, threshold, alive, died_at, first_step):
    """Advance every live row of ``a`` (rows x sites) by ``n_steps`` steps in place

    ``kicks`` is (steps, rows, sites) and only read when ``noisy``. A row leaving the
    divergence radius is zeroed, marked dead and stamped with the step it reached.
    """
    rows, sites = a.shape
    updated = np.empty(sites, dtype=np.complex128)
    for b in range(rows):
        if not alive[b]:
            continue
        for s in range(n_steps):
            total = 0j
            if uniform:
                for n in range(sites):
                    total += a[b, n]
            escaped = False
            for n in range(sites):
                z = a[b, n]
                if uniform:
                    exchange = uniform_weight * (total - z)
                else:
                    exchange = 0j
                    for m in range(sites):
                        exchange += a[b, m] * weights[m, n]
                gain = kappa1 - 2.0 * kappa2 * (z.real * z.real + z.imag * z.imag)
                value = z + (z * gain + exchange - z * row_sums[n] - drive_term) * dt
                if noisy:
                    value += kicks[s, b, n]
                value = rotation * value
                if not abs(value) <= threshold:
                    escaped = True
                updated[n] = value
            if escaped:
                alive[b] = False
                died_at[b] = first_step + s + 1
                for n in range(sites):
                    a[b, n] = 0j
                break
            for n in range(sites):
                a[b, n] = updated[n]


class LangevinSystem:
    """Drift and noise operators of one ring, precomputed for fast stepping"""

    def __init__(self, params, coupling, n_osc, pair_noise='factored',
                 noise_scale=1.0, extra_noise_variance=0.0):
        self.params = params
        self.coupling = coupling
        self.n_osc = n_osc
        self.pair_noise = pair_noise
        self.norm = normalization(coupling, n_osc)
        self.matrix = coupling_matrix(coupling, n_osc)
        self.weights = self.matrix / self.norm
        self.row_sums = self.weights.sum(axis=1)
        off_diagonal = self.weights[~np.eye(n_osc, dtype=bool)]
        # all-to-all with equal rates: exchange reduces to w (sum(a) - a_n)
        self.uniform = bool(off_diagonal.size and off_diagonal.min() == off_diagonal.max())
        self.uniform_weight = float(off_diagonal[0]) if self.uniform else 0.0

        if params.kappa2 > 0:
            self.radius = math.sqrt(params.kappa1 / (2.0 * params.kappa2))
        else:
            self.radius = 0.0
        self.divergence_threshold = DIVERGENCE_FACTOR * max(self.radius, 1.0)
        self.near_zero = NEAR_ZERO_MODULUS * max(self.radius, 1.0)

        self.local_amplitude = noise_scale * math.sqrt(3.0 * params.kappa1 + 2.0 * params.kappa2)
        # each quadrature of the test channel gains variance extra_noise_variance per unit time
        self.extra_amplitude = math.sqrt(2.0 * extra_noise_variance)
        self.pair_mixing = noise_scale * self._pair_mixing(pair_noise)
        self.mixing = self._site_mixing(pair_noise)
        self.n_channels = self.mixing.shape[0]

    @classmethod
    def from_config(cls, config, params, coupling):
        return cls(
            params, coupling, config.n_osc,
            pair_noise=config.pair_noise,
            noise_scale=config.noise_scale,
            extra_noise_variance=config.extra_noise_variance,
        )

    def _pair_mixing(self, mode):
        """Map from pair channels onto sites; rows x sites with mixing.T @ mixing = Laplacian / 4"""
        N = self.n_osc
        if N < 2 or not np.any(self.weights):
            return np.zeros((0, N))
        if mode == 'factored':
            return 0.5 * _psd_root(laplacian(self.coupling, N))
        rows = []
        for m in range(N):
            for n in range(m + 1, N):
                if self.weights[m, n] > 0:
                    row = np.zeros(N)
                    scale = 0.5 * math.sqrt(self.weights[m, n])
                    row[n] = scale
                    row[m] = -scale
                    rows.append(row)
        return np.array(rows).reshape(-1, N)

    def _site_mixing(self, mode):
        """Channels x sites; its Gram matrix is the covariance of one unit-time site kick

        ``pairwise`` keeps one channel per site plus one per coupled pair. ``factored``
        draws one channel per site through the root of the whole covariance.
        """
        N = self.n_osc
        local = math.hypot(self.local_amplitude, self.extra_amplitude)
        if mode == 'factored':
            covariance = local ** 2 * np.eye(N) + self.pair_mixing.T @ self.pair_mixing
            return _psd_root(covariance)
        return np.vstack([local * np.eye(N), self.pair_mixing])

    @property
    def has_noise(self):
        return bool(np.any(self.mixing))

    @property
    def covariance(self):
        return self.mixing.T @ self.mixing

    def noise_source(self, seed, block_size):
        return NoiseSource(seed, block_size, self.n_channels)

    def drift(self, a):
        return drift(a, self.params, self.matrix, self.norm)

    def noise(self, increments, dt):
        """Site kicks for unit complex increments whose last axis runs over channels"""
        return math.sqrt(dt) * (increments.real @ self.mixing + 1j * (increments.imag @ self.mixing))

    def advance_steps(self, a, dt, n_steps, kicks=None, alive=None, died_at=None, first_step=0):
        """Integrate rows of ``a`` in place; returns the alive mask and death steps"""
        rows = a.shape[0]
        if alive is None:
            alive = np.ones(rows, dtype=bool)
        if died_at is None:
            died_at = np.full(rows, -1, dtype=np.int64)
        noisy = kicks is not None
        if not noisy:
            kicks = np.zeros((1, rows, self.n_osc), dtype=complex)
        _em_steps(
            a, kicks, noisy, int(n_steps), float(dt),
            complex(np.exp(-1j * self.params.omega * dt)),
            float(self.params.kappa1), float(self.params.kappa2),
            complex(1j * np.conj(self.params.drive)),
            np.ascontiguousarray(self.weights), np.ascontiguousarray(self.row_sums),
            self.uniform, self.uniform_weight, float(self.divergence_threshold),
            alive, died_at, int(first_step),
        )
        return alive, died_at


def _psd_root(matrix):
    eigenvalues, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.T


def step(state, dt, rng, system, traj_index=0):
    """One Euler-Maruyama step of a single trajectory

    ``rng`` is the trajectory's NoiseSource; the step index is read from the state's time.
    """
    index = int(round(state.time / dt))
    kicks = None
    if system.has_noise:
        kicks = system.noise(rng.step_increments(traj_index, index), dt).reshape(1, 1, -1)
    amplitudes = np.array(state.amplitudes, dtype=complex).reshape(1, -1)
    alive, _ = system.advance_steps(amplitudes, dt, 1, kicks, first_step=index)
    time = (index + 1) * dt
    if not alive[0]:
        raise DivergenceError(traj_index, time)
    return TrajectoryState(amplitudes[0], time)


class MomentAccumulator:
    """Per-record-time sums of the trajectory statistics kept in an EnsembleRecord"""

    SITE_FIELDS = ('site_mean', 'site_abs2', 'site_abs4', 'site_square', 'site_phase', 'site_phase2')
    ERROR_FIELDS = ('error_mean', 'error_abs2', 'error_square')

    def __init__(self, n_records, n_osc, record_all_sites=False, near_zero=NEAR_ZERO_MODULUS):
        self.n_osc = n_osc
        self.n_sites = n_osc if record_all_sites else 1
        self.near_zero = near_zero
        self.count = np.zeros(n_records, dtype=np.int64)
        self.mean_field = np.zeros(n_records, dtype=complex)
        for name in self.SITE_FIELDS:
            setattr(self, name, np.zeros((n_records, self.n_sites), dtype=complex))
        self.site_near_zero = np.zeros((n_records, self.n_sites), dtype=np.int64)
        for name in self.ERROR_FIELDS:
            setattr(self, name, np.zeros(n_records, dtype=complex))

    def add(self, index, a):
        """Add rows of amplitudes (trajectories x sites) to record slot ``index``"""
        if a.shape[0] == 0:
            return
        self.count[index] += a.shape[0]
        self.mean_field[index] += a.mean(axis=1).sum()
        sites = a[:, :self.n_sites]
        modulus2 = sites.real ** 2 + sites.imag ** 2
        phase = np.exp(1j * np.angle(sites))
        self.site_mean[index] += sites.sum(axis=0)
        self.site_abs2[index] += modulus2.sum(axis=0)
        self.site_abs4[index] += (modulus2 ** 2).sum(axis=0)
        self.site_square[index] += (sites ** 2).sum(axis=0)
        self.site_phase[index] += phase.sum(axis=0)
        self.site_phase2[index] += (phase ** 2).sum(axis=0)
        self.site_near_zero[index] += (np.sqrt(modulus2) < self.near_zero).sum(axis=0)
        if self.n_osc >= 2:
            delta = a[:, 0] - a[:, 1:].mean(axis=1)
            self.error_mean[index] += delta.sum()
            self.error_abs2[index] += (delta.real ** 2 + delta.imag ** 2).sum()
            self.error_square[index] += (delta ** 2).sum()

    def merge(self, other):
        self.count += other.count
        self.mean_field += other.mean_field
        for name in self.SITE_FIELDS + self.ERROR_FIELDS + ('site_near_zero',):
            getattr(self, name)[...] += getattr(other, name)
        return self

    def means(self):
        alive = self.count.astype(float)
        with np.errstate(invalid='ignore', divide='ignore'):
            result = {'mean_field': self.mean_field / alive}
            for name in self.SITE_FIELDS:
                result[name] = getattr(self, name) / alive[:, None]
            for name in self.ERROR_FIELDS:
                result[name] = getattr(self, name) / alive if self.n_osc >= 2 else None
        if self.n_osc >= 2:
            result['error_abs2'] = result['error_abs2'].real
        result['site_abs2'] = result['site_abs2'].real
        result['site_abs4'] = result['site_abs4'].real
        result['site_near_zero'] = self.site_near_zero.copy()
        result['alive'] = self.count.copy()
        return result


@dataclass
class EnsembleRecord:
    """Trajectory-averaged statistics on the recorded time grid

    Site moments cover oscillator 1 only unless the ensemble was recorded with
    ``record_all_sites``; error-mode moments use delta = a_1 - mean(a_2..a_N).
    """

    times: np.ndarray
    n_osc: int
    n_traj: int
    mean_field: np.ndarray
    site_mean: np.ndarray
    site_abs2: np.ndarray
    site_abs4: np.ndarray
    site_square: np.ndarray
    site_phase: np.ndarray
    site_phase2: np.ndarray
    site_near_zero: np.ndarray
    alive: np.ndarray
    error_mean: np.ndarray = None
    error_abs2: np.ndarray = None
    error_square: np.ndarray = None
    snapshots: dict = field(default_factory=dict)
    diverged: list = field(default_factory=list)
    limit_cycle_radius: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("recorded times must be strictly increasing")
        for name in ('mean_field', 'site_mean', 'site_abs2', 'alive'):
            if len(getattr(self, name)) != len(self.times):
                raise ConfigurationError(f"{name} does not match the time grid")

    @property
    def n_sites(self):
        return self.site_mean.shape[1]

    def index_of(self, t):
        matches = np.flatnonzero(np.isclose(self.times, t, rtol=1e-9, atol=1e-12))
        if matches.size == 0:
            raise TimeLookupError(f"t={t} is not on the recorded grid")
        return int(matches[0])

    def site_column(self, osc_index):
        if not 1 <= osc_index <= self.n_sites:
            raise ConfigurationError(
                f"oscillator {osc_index} was not recorded (recorded sites: 1..{self.n_sites})"
            )
        return osc_index - 1

    def snapshot_at(self, t):
        for time, samples in self.snapshots.items():
            if np.isclose(time, t, rtol=1e-9, atol=1e-12):
                return samples
        raise TimeLookupError(f"no snapshot recorded at t={t}")

    @classmethod
    def from_accumulator(cls, times, accumulator, n_traj, **extra):
        return cls(times=times, n_osc=accumulator.n_osc, n_traj=n_traj, **accumulator.means(), **extra)

    @classmethod
    def from_samples(cls, times, samples, record_all_sites=True, limit_cycle_radius=0.0):
        """Build a record from explicit amplitudes of shape (times, trajectories, sites)

        Every time point is also kept as a snapshot.
        """
        samples = np.asarray(samples, dtype=complex)
        if samples.ndim == 2:
            samples = samples[:, :, None]
        n_records, n_traj, n_osc = samples.shape
        accumulator = MomentAccumulator(
            n_records, n_osc, record_all_sites, NEAR_ZERO_MODULUS * max(limit_cycle_radius, 1.0)
        )
        for index in range(n_records):
            accumulator.add(index, samples[index])
        times = np.asarray(times, dtype=float)
        snapshots = {float(t): samples[i].copy() for i, t in enumerate(times)}
        return cls.from_accumulator(
            times, accumulator, n_traj, snapshots=snapshots, limit_cycle_radius=limit_cycle_radius
        )


@dataclass
class BlockResult:
    block: int
    accumulator: MomentAccumulator
    diverged: list
    snapshots: dict
    kept: np.ndarray = None


@dataclass
class TrajectorySeries:
    traj_index: int
    times: np.ndarray
    amplitudes: np.ndarray

    def states(self):
        return [TrajectoryState(a, t) for t, a in zip(self.times, self.amplitudes)]


def initial_amplitudes(config, system, source, block):
    amplitude = system.radius if config.initial_amplitude is None else config.initial_amplitude
    if config.initial_phase == 'uniform':
        phases = source.initial_phases(block)
    else:
        phases = np.zeros(config.block_size)
    start = amplitude * np.exp(1j * phases)
    return np.repeat(start[:, None], config.n_osc, axis=1)


def integrate_block(config, params, coupling, block, keep_row=None):
    """Integrate trajectories block*block_size ... (block+1)*block_size - 1

    Every block draws the noise of all its rows, so a trajectory's increments do not
    depend on n_traj; rows past n_traj are never integrated or counted.
    """
    system = LangevinSystem.from_config(config, params, coupling)
    B = config.block_size
    rows = block * B + np.arange(B)
    counted = rows < config.n_traj
    alive = counted.copy()
    died_at = np.full(B, -1, dtype=np.int64)
    source = system.noise_source(config.seed, B)
    a = np.ascontiguousarray(initial_amplitudes(config, system, source, block), dtype=complex)

    record_index = {int(s): i for i, s in enumerate(config.record_steps())}
    snapshot_steps = set(config.snapshot_steps())
    accumulator = MomentAccumulator(
        len(record_index), config.n_osc, config.record_all_sites, system.near_zero
    )
    kept = None
    if keep_row is not None:
        kept = np.empty((len(record_index), config.n_osc), dtype=complex)
    snapshots = {}
    kicks, kicks_chunk = None, None

    index_step = 0
    for event in sorted(set(record_index) | snapshot_steps | {config.n_steps}):
        # integrate up to the next observation, never across a noise chunk
        while index_step < event:
            chunk_index, offset = divmod(index_step, source.chunk_steps)
            count = min(event - index_step, source.chunk_steps - offset)
            segment = None
            if system.has_noise:
                if kicks_chunk != chunk_index:
                    kicks = system.noise(source.chunk(block, chunk_index), config.dt)
                    kicks_chunk = chunk_index
                segment = kicks[offset:offset + count]
            system.advance_steps(a, config.dt, count, segment, alive, died_at, index_step)
            index_step += count

        slot = record_index.get(event)
        if slot is not None:
            accumulator.add(slot, a[alive])
            if kept is not None:
                kept[slot] = a[keep_row] if alive[keep_row] else np.nan
        if event in snapshot_steps:
            frame = a[counted].copy()
            frame[~alive[counted]] = np.nan
            snapshots[event * config.dt] = frame

    diverged = sorted(
        (int(rows[row]), float(died_at[row] * config.dt))
        for row in np.flatnonzero(died_at >= 0)
    )
    return BlockResult(block, accumulator, diverged, snapshots, kept)


def _integrate_block_task(task):
    return integrate_block(*task)


def simulate_trajectory(config, params, coupling, traj_index):
    """Recorded states of one trajectory, identical to its path inside an ensemble run"""
    if not 0 <= traj_index < config.n_traj:
        raise ConfigurationError(f"trajectory index {traj_index} outside 0..{config.n_traj - 1}")
    check_stability(config, params, coupling)
    block, row = divmod(traj_index, config.block_size)
    result = integrate_block(config, params, coupling, block, keep_row=row)
    for index, time in result.diverged:
        if index == traj_index:
            raise DivergenceError(traj_index, time)
    return TrajectorySeries(traj_index, config.record_times(), result.kept)


def simulate_ensemble(config, params, coupling, workers=1):
    """Run n_traj trajectories and reduce them into an EnsembleRecord"""
    check_stability(config, params, coupling)
    tasks = [(config, params, coupling, block) for block in range(config.n_blocks)]
    workers = max(1, min(int(workers), len(tasks)))
    logger.info(
        "Ensemble N=%d: %d trajectories in %d blocks, %d steps, %d worker(s)",
        config.n_osc, config.n_traj, len(tasks), config.n_steps, workers,
    )

    total = None
    diverged = []
    snapshots = {}

    def collect(results):
        nonlocal total
        for done, result in enumerate(results, start=1):
            total = result.accumulator if total is None else total.merge(result.accumulator)
            diverged.extend(result.diverged)
            for time, frame in result.snapshots.items():
                snapshots.setdefault(time, []).append(frame)
            logger.debug("Block %d/%d done", done, len(tasks))

    if workers == 1:
        collect(map(_integrate_block_task, tasks))
    else:
        with Pool(processes=workers) as pool:
            collect(pool.imap(_integrate_block_task, tasks))

    if len(diverged) > MAX_DIVERGED_FRACTION * config.n_traj:
        raise EnsembleDivergenceError([index for index, _ in diverged], config.n_traj)
    if diverged:
        logger.warning("%d trajectories diverged and were dropped", len(diverged))

    system = LangevinSystem.from_config(config, params, coupling)
    return EnsembleRecord.from_accumulator(
        config.record_times(), total, config.n_traj,
        snapshots={time: np.concatenate(frames) for time, frames in snapshots.items()},
        diverged=sorted(diverged),
        limit_cycle_radius=system.radius,
    )

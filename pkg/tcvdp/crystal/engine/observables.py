"""
Physical quantities computed from an EnsembleRecord.

Quadratures follow q = (a + a*)/sqrt(2), p = (a - a*)/(i sqrt(2)), so the
vacuum variance is 1/2 per quadrature.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft, signal, stats

from .exceptions import (
    ConfigurationError,
    FitError,
    HistogramError,
    PhaseUndefinedError,
    SpectrumError,
)

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10
MIN_SPECTRUM_SAMPLES = 64
PARSEVAL_TOLERANCE = 1e-10
TRANSIENT_RATES = 5.0
FLOOR_FACTOR = 3.0
MAX_NEAR_ZERO_FRACTION = 0.01
HISTOGRAM_MODES = ('oscillator', 'error')


@dataclass(frozen=True)
class DecayFit:
    gamma_eff: float
    r_squared: float
    window: tuple
    gamma_stderr: float = 0.0
    n_samples: int = 0


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float = 0.0
    intercept_stderr: float = 0.0


@dataclass(frozen=True)
class PowerSpectrum:
    frequencies: np.ndarray
    power: np.ndarray
    peak_frequency: float
    fwhm: float
    window: str = 'hann'
    series_power: float = 0.0
    parseval_residual: float = 0.0


@dataclass(frozen=True)
class PhaseFluctuation:
    value: float
    stderr: float
    t: float
    osc_index: int = 1

    @property
    def is_sentinel(self):
        return math.isinf(self.value)


@dataclass(frozen=True)
class SyncMeasure:
    value: float
    t: float
    n_osc: int
    error_variance: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True)
class PhaseSpaceHistogram:
    q_centers: np.ndarray
    p_centers: np.ndarray
    density: np.ndarray
    mode: str
    t: float

    @property
    def axes(self):
        if self.mode == 'error':
            return ('q_error', 'p_error')
        return ('q', 'p')


def order_parameter(record, t):
    """Trajectory- and site-averaged field r = (1/N) sum_i <a_i> at time t"""
    return complex(record.mean_field[record.index_of(t)])


def order_parameter_series(record):
    return record.times.copy(), record.mean_field.copy()


def _r_squared(y, fitted):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError(f"need at least 2 points for a line fit, got {x.size}")
    result = stats.linregress(x, y)
    return LinearFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=_r_squared(y, result.intercept + result.slope * x),
        slope_stderr=float(result.stderr),
        intercept_stderr=float(result.intercept_stderr),
    )


def fit_gamma(times, amplitudes, window, floor=0.0):
    """Least-squares fit of ln|r| against t over ``window``; Gamma is minus the slope"""
    times = np.asarray(times, dtype=float)
    amplitudes = np.abs(np.asarray(amplitudes))
    t_start, t_end = window
    if t_end <= t_start:
        raise FitError(f"empty fit window ({t_start}, {t_end})")
    inside = (times >= t_start - 1e-12) & (times <= t_end + 1e-12)
    if inside.sum() < MIN_FIT_SAMPLES:
        raise FitError(
            f"fit window ({t_start:g}, {t_end:g}) holds {inside.sum()} samples, "
            f"need {MIN_FIT_SAMPLES}"
        )
    t = times[inside]
    r = amplitudes[inside]
    if np.any(r <= floor) or np.any(r <= 0):
        raise FitError(f"|r| drops below the noise floor {floor:.3g} inside the fit window")
    line = linear_fit(t, np.log(r))
    return DecayFit(
        gamma_eff=-line.slope,
        r_squared=line.r_squared,
        window=(float(t[0]), float(t[-1])),
        gamma_stderr=line.slope_stderr,
        n_samples=int(t.size),
    )


def noise_floor(record):
    return FLOOR_FACTOR * record.limit_cycle_radius / math.sqrt(record.n_traj)


def default_fit_window(record, kappa1):
    """Skip the transient 5/kappa1, stop before |r| first falls below the noise floor"""
    if kappa1 <= 0:
        raise FitError("default fit window needs kappa1 > 0")
    start = TRANSIENT_RATES / kappa1
    floor = noise_floor(record)
    amplitudes = np.abs(record.mean_field)
    later = np.flatnonzero(record.times >= start)
    if later.size == 0:
        raise FitError(f"record ends before the transient at t={start:g}")
    below = later[amplitudes[later] <= floor]
    stop = below[0] - 1 if below.size else later[-1]
    if stop <= later[0]:
        raise FitError("|r| is below the noise floor right after the transient")
    return float(record.times[later[0]]), float(record.times[stop])


def fit_decay(record, kappa1, window=None):
    window = window or default_fit_window(record, kappa1)
    return fit_gamma(record.times, record.mean_field, window, floor=noise_floor(record))


def _half_crossing(frequencies, power, peak, half, direction):
    index = peak
    while 0 <= index + direction < power.size:
        following = index + direction
        if power[following] < half:
            # linear interpolation between the last bin above and the first below half
            f0, f1 = frequencies[index], frequencies[following]
            p0, p1 = power[index], power[following]
            return f0 + (half - p0) * (f1 - f0) / (p1 - p0)
        index = following
    return frequencies[index]


def power_spectrum(times, series, window='hann'):
    """Power of the complex series on an angular-frequency grid

    The transform uses exp(+i w t) so that exp(-i w0 t) peaks at +w0. Power is
    |X|^2 / (n^2 <w^2>), the windowed transform divided by the mean window energy,
    so a constant-modulus series keeps its total power under any window.
    ``parseval_residual`` compares the untapered transform with the mean squared
    magnitude of the raw series.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=complex)
    n = series.size
    if n < MIN_SPECTRUM_SAMPLES:
        raise SpectrumError(f"need at least {MIN_SPECTRUM_SAMPLES} samples, got {n}")
    if times.size != n:
        raise SpectrumError("times and series differ in length")
    steps = np.diff(times)
    dt = steps.mean()
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(dt))):
        raise SpectrumError("series is not uniformly sampled")
    if window == 'rectangular':
        taper = np.ones(n)
    elif window == 'hann':
        taper = signal.get_window('hann', n)
    else:
        raise SpectrumError(f"unknown window {window!r}")

    transform = fft.fftshift(fft.ifft(series * taper, norm='forward'))
    power = np.abs(transform) ** 2 / (n ** 2 * np.mean(taper ** 2))
    frequencies = 2.0 * np.pi * fft.fftshift(fft.fftfreq(n, d=dt))

    series_power = float(np.mean(np.abs(series) ** 2))
    raw_power = float(np.sum(np.abs(fft.ifft(series, norm='forward')) ** 2)) / n ** 2
    parseval_residual = abs(raw_power - series_power) / series_power if series_power > 0 else 0.0
    if not parseval_residual <= PARSEVAL_TOLERANCE:
        raise SpectrumError(f"transform lost power: Parseval residual {parseval_residual:.3g}")

    peak = int(np.argmax(power))
    half = power[peak] / 2.0
    left = _half_crossing(frequencies, power, peak, half, -1)
    right = _half_crossing(frequencies, power, peak, half, +1)
    return PowerSpectrum(
        frequencies=frequencies,
        power=power,
        peak_frequency=float(frequencies[peak]),
        fwhm=float(right - left),
        window=window,
        series_power=series_power,
        parseval_residual=float(parseval_residual),
    )


def phase_fluctuation(record, osc_index, t):
    """Circular variance -2 ln|<exp(i theta)>| of the phase of oscillator ``osc_index``

    Returns +inf when |<exp(i theta)>| is at or below the sampling floor 1/sqrt(n).
    """
    index = record.index_of(t)
    column = record.site_column(osc_index)
    n = int(record.alive[index])
    if n == 0:
        raise PhaseUndefinedError(f"no live trajectories at t={t}")
    near_zero = int(record.site_near_zero[index, column])
    if near_zero > MAX_NEAR_ZERO_FRACTION * n:
        raise PhaseUndefinedError(
            f"{near_zero} of {n} trajectories have a vanishing amplitude at t={t}"
        )
    first = record.site_phase[index, column]
    resultant = abs(first)
    if resultant <= 1.0 / math.sqrt(n):
        return PhaseFluctuation(math.inf, math.inf, float(record.times[index]), osc_index)

    # delta method on the resultant length, rotated onto the mean direction
    direction = first / resultant
    second = record.site_phase2[index, column] * np.conj(direction) ** 2
    variance = max((1.0 + second.real) / 2.0 - resultant ** 2, 0.0)
    stderr = 2.0 * math.sqrt(variance / n) / resultant
    value = max(-2.0 * math.log(min(resultant, 1.0)), 0.0)
    return PhaseFluctuation(value, stderr, float(record.times[index]), osc_index)


def quadrature_spread(record, t, osc_index=1):
    """Standard deviations (dq, dp) of the quadratures of one oscillator"""
    index = record.index_of(t)
    column = record.site_column(osc_index)
    mean = record.site_mean[index, column]
    abs2 = record.site_abs2[index, column]
    square = record.site_square[index, column].real
    q_var = abs2 + square - 2.0 * mean.real ** 2
    p_var = abs2 - square - 2.0 * mean.imag ** 2
    return math.sqrt(max(q_var, 0.0)), math.sqrt(max(p_var, 0.0))


def _require_error_mode(record):
    if record.n_osc < 2 or record.error_abs2 is None:
        raise ConfigurationError("the error mode needs at least two oscillators")


def sync_measure(record, t):
    """Inverse error-mode power 1 / <q_-^2 + p_-^2> between oscillator 1 and the rest"""
    _require_error_mode(record)
    index = record.index_of(t)
    variance = float(record.error_abs2[index])
    time = float(record.times[index])
    if variance <= 0.0:
        return SyncMeasure(math.inf, time, record.n_osc, 0.0, degenerate=True)
    return SyncMeasure(1.0 / variance, time, record.n_osc, variance)


def sync_series(record):
    _require_error_mode(record)
    variance = np.asarray(record.error_abs2, dtype=float)
    with np.errstate(divide='ignore'):
        values = np.where(variance > 0, 1.0 / variance, np.inf)
    return record.times.copy(), values


def uncorrelated_baseline(n_osc, prefactor=1.0):
    """Reference curve proportional to 1 / (1 + 1/N)"""
    return prefactor / (1.0 + 1.0 / np.asarray(n_osc, dtype=float))


def phase_space_points(record, t, mode='oscillator', osc_index=1):
    """(q, p) sample coordinates from the snapshot at time t"""
    if mode not in HISTOGRAM_MODES:
        raise ConfigurationError(f"mode must be one of {HISTOGRAM_MODES}, got {mode!r}")
    samples = np.asarray(record.snapshot_at(t))
    samples = samples[np.all(np.isfinite(samples), axis=1)]
    if samples.shape[0] == 0:
        raise HistogramError(f"snapshot at t={t} holds no samples")
    if mode == 'error':
        _require_error_mode(record)
        delta = samples[:, 0] - samples[:, 1:].mean(axis=1)
        return delta.real.copy(), delta.imag.copy()
    if not 1 <= osc_index <= samples.shape[1]:
        raise ConfigurationError(f"oscillator {osc_index} outside 1..{samples.shape[1]}")
    a = samples[:, osc_index - 1]
    return math.sqrt(2.0) * a.real, math.sqrt(2.0) * a.imag


def histogram_points(q, p, bins=41, extent=None, mode='oscillator', t=0.0):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.size == 0:
        raise HistogramError("no samples to histogram")
    if extent is None:
        extent = float(max(np.max(np.abs(q)), np.max(np.abs(p))))
        extent = extent * 1.0001 if extent > 0 else 1.0
    counts, q_edges, p_edges = np.histogram2d(q, p, bins=bins, range=[[-extent, extent], [-extent, extent]])
    total = counts.sum()
    if total == 0:
        raise HistogramError(f"no samples inside the histogram range +-{extent:g}")
    return PhaseSpaceHistogram(
        q_centers=0.5 * (q_edges[:-1] + q_edges[1:]),
        p_centers=0.5 * (p_edges[:-1] + p_edges[1:]),
        density=counts / total,
        mode=mode,
        t=t,
    )


def phase_space_histogram(record, t, mode='oscillator', bins=41, extent=None, osc_index=1):
    """Normalized 2D histogram of oscillator 1 (q, p) or of the error mode (q_-, p_-)"""
    q, p = phase_space_points(record, t, mode, osc_index)
    return histogram_points(q, p, bins=bins, extent=extent, mode=mode, t=t)


def marginal_excess_kurtosis(q, p):
    """Fisher excess kurtosis of both marginals; 0 for a Gaussian"""
    return float(stats.kurtosis(q, fisher=True)), float(stats.kurtosis(p, fisher=True))


def angular_anisotropy(q, p):
    """Length of the mean unit vector of the sample angles; 0 for a ring-symmetric cloud"""
    angles = np.arctan2(p, q)
    return float(abs(np.mean(np.exp(1j * angles))))


def spread(q, p):
    return float(math.sqrt(np.mean(np.asarray(q) ** 2 + np.asarray(p) ** 2)))

"""
CSV and JSON writers for experiment outputs.

CSV files are UTF-8 with a header row and floats written with 17 significant
digits, so rerunning an experiment reproduces them byte for byte.
"""

import csv
import json
import math

import numpy as np


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


def write_csv(path, header, rows):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def write_order_parameter(path, times, series):
    return write_csv(
        path, ['t', 're_r', 'im_r', 'abs_r'],
        ((t, r.real, r.imag, abs(r)) for t, r in zip(times, series)),
    )


def write_spectrum(path, spectrum):
    return write_csv(path, ['freq', 'power'], zip(spectrum.frequencies, spectrum.power))


def write_gamma_fits(path, rows):
    """Rows of (N, gamma, gamma_over_kappa1, r_squared)"""
    return write_csv(path, ['N', 'gamma', 'gamma_over_kappa1', 'r_squared'], rows)


def write_sync(path, rows):
    """Rows of (N, t, s_c)"""
    return write_csv(path, ['N', 't', 's_c'], rows)


def write_phase_fluctuations(path, rows):
    """Rows of (N, t, delta2_theta, stderr)"""
    return write_csv(path, ['N', 't', 'delta2_theta', 'stderr'], rows)


def write_histogram(path, histogram):
    q_label, p_label = histogram.axes
    rows = (
        (q, p, histogram.density[i, j])
        for i, q in enumerate(histogram.q_centers)
        for j, p in enumerate(histogram.p_centers)
    )
    return write_csv(path, [f'{q_label}_bin_center', f'{p_label}_bin_center', 'density'], rows)


def write_eigenvalues(path, result):
    rows = (
        (index, value.real, value.imag, residual)
        for index, (value, residual) in enumerate(zip(result.eigenvalues, result.residuals))
    )
    return write_csv(path, ['index', 're_lambda', 'im_lambda', 'residual'], rows)


def write_steady_state(path, rho):
    rho = np.asarray(rho)
    rows = (
        (row, col, rho[row, col].real, rho[row, col].imag)
        for row in range(rho.shape[0])
        for col in range(rho.shape[1])
    )
    return write_csv(path, ['row', 'col', 're', 'im'], rows)


def write_snapshots(path, record):
    """One line per (trajectory, time, oscillator); oscillators are 1-based"""
    def rows():
        for t in sorted(record.snapshots):
            frame = record.snapshots[t]
            for traj, amplitudes in enumerate(frame):
                for n, a in enumerate(amplitudes, start=1):
                    yield traj, t, n, a.real, a.imag

    return write_csv(path, ['traj', 't', 'n', 're_a', 'im_a'], rows())


def to_builtin(value):
    """Recursively convert numpy scalars and arrays into JSON-friendly values"""
    if isinstance(value, dict):
        return {str(key): to_builtin(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': to_builtin(value.real), 'im': to_builtin(value.imag)}
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        if math.isnan(value):
            return None
        return value
    return value


def write_json(path, payload, encoder=None):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(to_builtin(payload), handle, indent=2, sort_keys=True, cls=encoder)
        handle.write('\n')
    return path

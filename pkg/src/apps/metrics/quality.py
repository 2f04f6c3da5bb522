# apps/metrics/quality.py
import csv
import logging
import math
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

OSCILLATION_WINDOW = (50, 200)


def _values(f):
    return np.asarray(getattr(f, 'values', f), dtype=np.float64)


def image_rmse(f, f_true):
    """sqrt(mean((f - f_true)^2)) over all pixels"""
    a, b = _values(f), _values(f_true)
    if a.shape != b.shape:
        raise ValueError(f'Cannot compare images of shape {a.shape} and {b.shape}')
    return float(np.sqrt(np.mean((a - b) ** 2)))


def oscillation_index(records, window=OSCILLATION_WINDOW):
    """Population std of successive RMSE changes for iterations inside ``window`` (inclusive)."""
    lo, hi = window
    series = [r.image_rmse for r in records if lo <= r.iteration <= hi]
    if len(series) < 2:
        raise ValueError(f'Window {lo}-{hi} holds {len(series)} record(s); need at least 2')
    return float(np.std(np.diff(series)))


def improvement_percent(rmse_single, rmse_two):
    # undefined against an exact single-channel result
    if rmse_single == 0:
        return math.nan
    return round(100.0 * (rmse_single - rmse_two) / rmse_single, 1)


def write_convergence_csv(path, records):
    """RMSE per iteration with log10 columns for log-log plotting"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['iteration', 'rmse', 'log10_iteration', 'log10_rmse'])
        for r in records:
            log_rmse = math.log10(r.image_rmse) if r.image_rmse > 0 else float('-inf')
            writer.writerow([r.iteration, f'{r.image_rmse:.10g}', f'{math.log10(r.iteration):.10g}', f'{log_rmse:.10g}'])
    return path

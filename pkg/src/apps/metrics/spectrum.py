# apps/metrics/spectrum.py
"""Mode gains |R X e_k| / |e_k| for cosine mode images.

A mode image along x varies with the column index and is constant down each
column; along z the roles swap. Gains are the per-mode surrogate for the
singular values of the weighted system operator.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.filters.hann import filter_rows

logger = logging.getLogger(__name__)

DIRECTIONS = ('x', 'z')


@dataclass(frozen=True)
class ModeGainProfile:
    frequencies: tuple
    gains: tuple
    direction: str = 'x'
    label: str = ''

    def gain(self, k):
        return self.gains[self.frequencies.index(k)]


def cosine_mode(shape, k, direction='x'):
    n_rows, n_cols = shape
    if direction == 'x':
        return np.tile(np.cos(2.0 * np.pi * k * np.arange(n_cols) / n_cols), (n_rows, 1))
    return np.tile(np.cos(2.0 * np.pi * k * np.arange(n_rows) / n_rows)[:, None], (1, n_cols))


def mode_gain_profile(A, r, modes, direction='x', amplitude=1.0):
    if direction not in DIRECTIONS:
        raise ValueError(f'direction must be one of {DIRECTIONS}, got {direction!r}')
    n_modes = A.n_cols if direction == 'x' else A.n_rows
    gains = []
    for k in modes:
        if not 0 <= k <= n_modes // 2:
            raise ValueError(f'Mode {k} is outside 0..{n_modes // 2} for this grid')
        mode_image = amplitude * cosine_mode(A.image_shape, k, direction)
        response = filter_rows(A.forward(mode_image), r)
        gains.append(float(np.linalg.norm(response) / np.linalg.norm(mode_image)))
    logger.info(f'Mode gains for {r.label} along {direction}: {len(gains)} modes')
    return ModeGainProfile(tuple(int(k) for k in modes), tuple(gains), direction, r.label)


def write_profile_csv(path, profile):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['mode', 'gain'])
        for k, gain in zip(profile.frequencies, profile.gains):
            writer.writerow([k, f'{gain:.17g}'])
    return path

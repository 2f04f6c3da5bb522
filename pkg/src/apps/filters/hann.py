# apps/filters/hann.py
"""Square-root Hann filters along the detector axis.

Frequencies are the ``numpy.fft.fftfreq`` grid in cycles per bin, so the
Nyquist frequency is 0.5 and a response with cutoff parameter ``c`` passes
``|nu| <= 0.5 / c``. Filtering is cyclic along each detector row.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.geometry.scan import Sinogram

logger = logging.getLogger(__name__)

NYQUIST = 0.5

FILTER_KINDS = ('hann_sqrt', 'hann_sqrt_complement', 'identity')


@dataclass(frozen=True)
class FilterSpec:
    kind: str = 'hann_sqrt'
    cutoff_param: float = 4.0
    n_bins: int = 1024

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f'Unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}')
        if not self.cutoff_param > 0:
            raise ValueError(f'cutoff_param must be positive, got {self.cutoff_param}')
        if self.n_bins < 1:
            raise ValueError(f'n_bins must be positive, got {self.n_bins}')

    @property
    def cutoff_frequency(self):
        return NYQUIST / self.cutoff_param

    def as_dict(self):
        return {'kind': self.kind, 'cutoff_param': self.cutoff_param, 'n_bins': self.n_bins}


@dataclass(frozen=True, eq=False)
class FilterResponse:
    """Real, even gains over the ``fftfreq`` ordering of an n_bins transform"""
    gains: np.ndarray
    label: str = ''

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        if gains.ndim != 1 or gains.size < 1:
            raise ValueError('gains must be a non-empty 1D array')
        if np.any(gains < 0) or np.any(gains > 1):
            raise ValueError('gains must lie in [0, 1]')
        gains.setflags(write=False)
        object.__setattr__(self, 'gains', gains)

    @property
    def n_bins(self):
        return self.gains.size

    @property
    def frequencies(self):
        return np.fft.fftfreq(self.n_bins)

    @property
    def half_spectrum(self):
        """Gains on the ``rfftfreq`` grid"""
        return self.gains[:self.n_bins // 2 + 1]

    def squared(self):
        return FilterResponse(self.gains ** 2, label=f'{self.label}^2')


def hann_sqrt_response(n_bins, c):
    if not c > 0:
        raise ValueError(f'Cutoff parameter must be positive, got {c}')
    nu = np.abs(np.fft.fftfreq(n_bins))
    nu_c = NYQUIST / c
    gains = np.zeros(n_bins)
    passband = nu <= nu_c
    # clip guards against cos rounding to slightly below -1 at the cutoff
    gains[passband] = np.sqrt(np.clip(0.5 * (1.0 + np.cos(np.pi * nu[passband] / nu_c)), 0.0, 1.0))
    return FilterResponse(gains, label=f'hann_sqrt(c={c:g})')


def complement_response(base):
    """sqrt(1 - base^2): with ``base`` it forms an exact partition of unity in power"""
    return FilterResponse(np.sqrt(np.clip(1.0 - base.gains ** 2, 0.0, 1.0)), label=f'complement({base.label})')


def identity_response(n_bins):
    return FilterResponse(np.ones(n_bins), label='identity')


def build_response(spec):
    if spec.kind == 'identity':
        return identity_response(spec.n_bins)
    base = hann_sqrt_response(spec.n_bins, spec.cutoff_param)
    if spec.kind == 'hann_sqrt_complement':
        return complement_response(base)
    return base


def filter_rows(values, response):
    """Apply ``response`` to every row of a (views, bins) array."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != response.n_bins:
        raise ValueError(f'Sinogram has {values.shape[-1]} bins, filter has {response.n_bins}')
    spectrum = np.fft.rfft(values, axis=-1)
    return np.fft.irfft(spectrum * response.half_spectrum, n=response.n_bins, axis=-1)


def apply_filter(s, r):
    return Sinogram(s.n_views, s.n_bins, filter_rows(s.values, r))


def complementarity_deviation(hi, lo, passband_limit=None):
    """max |hi^2 + lo^2 - 1| over |nu| <= passband_limit (all frequencies if None)"""
    if hi.n_bins != lo.n_bins:
        raise ValueError(f'Responses differ in length: {hi.n_bins} vs {lo.n_bins}')
    total = hi.gains ** 2 + lo.gains ** 2 - 1.0
    if passband_limit is not None:
        total = total[np.abs(hi.frequencies) <= passband_limit]
    if total.size == 0:
        return 0.0
    return float(np.max(np.abs(total)))


def write_response_csv(path, response):
    """One row per frequency in ascending order: index, cycles per bin, gain"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = np.argsort(response.frequencies, kind='stable')
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['frequency_index', 'frequency', 'gain'])
        for idx in order:
            writer.writerow([int(idx), f'{response.frequencies[idx]:.10g}', f'{response.gains[idx]:.17g}'])
    logger.info(f'Wrote {response.label} response ({response.n_bins} bins) to {path}')
    return path

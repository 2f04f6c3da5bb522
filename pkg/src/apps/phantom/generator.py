# apps/phantom/generator.py
"""2D digital breast slice: thresholded power-law noise plus calcification specks."""
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from apps.geometry.scan import ImageGrid

logger = logging.getLogger(__name__)

BACKGROUND = 0
ADIPOSE = 1
FIBROGLANDULAR = 2
CALCIFICATION = 3

TISSUE_LABELS = {
    BACKGROUND: 'background',
    ADIPOSE: 'adipose',
    FIBROGLANDULAR: 'fibroglandular',
    CALCIFICATION: 'calcification',
}

# Stream keys appended to the seed so noise and speck placement draw independently
NOISE_STREAM = 0
CALCIFICATION_STREAM = 1

SHARING_METHODS = ('native', 'downsample')


def make_rng(seed, stream):
    """PCG64 generator keyed by (seed, stream); portable across platforms."""
    return np.random.Generator(np.random.PCG64([int(seed), int(stream)]))


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of one phantom realisation"""
    n_pixels: int = 256
    seed: int = 1234
    noise_exponent: float = 3.0
    glandular_fraction: float = 0.3
    n_calcifications: int = 10
    calc_radius_px: tuple = (1, 2)
    tissue_weights: tuple = (0.5, 1.0, 2.0)
    fov_side: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, 'calc_radius_px', tuple(int(r) for r in self.calc_radius_px))
        object.__setattr__(self, 'tissue_weights', tuple(float(w) for w in self.tissue_weights))
        if self.n_pixels < 8:
            raise ValueError(f'n_pixels must be at least 8, got {self.n_pixels}')
        if not 0.0 < self.glandular_fraction < 1.0:
            raise ValueError(f'glandular_fraction must lie in (0, 1), got {self.glandular_fraction}')
        if self.n_calcifications < 0:
            raise ValueError(f'n_calcifications must be >= 0, got {self.n_calcifications}')
        if self.noise_exponent < 0:
            raise ValueError(f'noise_exponent must be >= 0, got {self.noise_exponent}')
        if len(self.calc_radius_px) != 2 or not 0 <= self.calc_radius_px[0] <= self.calc_radius_px[1]:
            raise ValueError(f'calc_radius_px must be an ordered (min, max) pair, got {self.calc_radius_px}')
        if len(self.tissue_weights) != 3 or not all(np.isfinite(w) and w > 0 for w in self.tissue_weights):
            raise ValueError(f'tissue_weights must be three finite positive numbers, got {self.tissue_weights}')

    def weight_table(self):
        """Attenuation per label, indexed by label value"""
        adipose, fibroglandular, calcification = self.tissue_weights
        return np.array([0.0, adipose, fibroglandular, calcification])

    def as_dict(self):
        data = asdict(self)
        data['calc_radius_px'] = list(self.calc_radius_px)
        data['tissue_weights'] = list(self.tissue_weights)
        return data


@dataclass
class PhantomImage:
    values: ImageGrid
    labels: np.ndarray
    spec: PhantomSpec

    def label_fraction(self, label):
        support = self.labels != BACKGROUND
        return float(np.count_nonzero(self.labels == label)) / float(np.count_nonzero(support))


def _shaped_noise(n, exponent, seed):
    rng = make_rng(seed, NOISE_STREAM)
    white = rng.standard_normal((n, n))
    freq = np.fft.fftfreq(n)
    radial = np.hypot(freq[None, :], freq[:, None])
    amplitude = np.zeros_like(radial)
    nonzero = radial > 0
    # power ~ 1/nu^exponent, so amplitude ~ nu^(-exponent/2)
    amplitude[nonzero] = radial[nonzero] ** (-exponent / 2.0)
    field = np.fft.ifft2(np.fft.fft2(white) * amplitude).real
    field -= field.mean()
    return field / field.std()


def power_law_noise(n, exponent, seed, fov_side=10.0):
    """Zero-mean, unit-variance field with radially averaged power ~ 1/nu^exponent"""
    if n < 8:
        raise ValueError(f'n={n} is too small for spectral shaping (need n >= 8)')
    if exponent < 0:
        raise ValueError(f'exponent must be >= 0, got {exponent}')
    return ImageGrid.square(n, fov_side, _shaped_noise(n, exponent, seed))


def breast_support(n):
    # The whole square FOV is breast tissue
    return np.ones((n, n), dtype=bool)


def make_phantom(spec):
    n = spec.n_pixels
    noise = _shaped_noise(n, spec.noise_exponent, spec.seed)
    support = breast_support(n)

    threshold = np.quantile(noise[support], 1.0 - spec.glandular_fraction)
    glandular = support & (noise > threshold)

    labels = np.where(support, ADIPOSE, BACKGROUND).astype(np.uint8)
    labels[glandular] = FIBROGLANDULAR

    if spec.n_calcifications:
        candidates = np.flatnonzero(glandular)
        if candidates.size < spec.n_calcifications:
            raise ValueError(
                f'Glandular region has {candidates.size} pixels, too small for '
                f'{spec.n_calcifications} calcifications'
            )
        rng = make_rng(spec.seed, CALCIFICATION_STREAM)
        centres = rng.choice(candidates, size=spec.n_calcifications, replace=False)
        r_min, r_max = spec.calc_radius_px
        radii = rng.integers(r_min, r_max + 1, size=spec.n_calcifications)
        rows, cols = np.mgrid[0:n, 0:n]
        for centre, radius in zip(centres, radii):
            i, j = divmod(int(centre), n)
            disc = ((rows - i) ** 2 + (cols - j) ** 2 <= radius * radius) & support
            labels[disc] = CALCIFICATION

    values = spec.weight_table()[labels]
    logger.info(
        f'Phantom {n}x{n} seed={spec.seed}: '
        f'{np.count_nonzero(labels == FIBROGLANDULAR)} glandular, '
        f'{np.count_nonzero(labels == CALCIFICATION)} calcification pixels'
    )
    return PhantomImage(ImageGrid.square(n, spec.fov_side, values), labels, spec)


def _block_labels(labels, block):
    n = labels.shape[0] // block
    blocks = labels.reshape(n, block, n, block).transpose(0, 2, 1, 3).reshape(n, n, block * block)
    counts = np.stack([(blocks == label).sum(axis=-1) for label in TISSUE_LABELS], axis=-1)
    coarse = counts.argmax(axis=-1).astype(np.uint8)
    # Specks are smaller than a block; keep them visible
    coarse[counts[..., CALCIFICATION] > 0] = CALCIFICATION
    return coarse


def downsample_consistent(spec, n_target, method='native'):
    """Phantom for an ``n_target`` grid that shares the parameters of ``spec``.

    ``native`` regenerates at the target size with the same seed, scaling the
    speck radii with the grid; ``downsample`` builds ``spec`` and reduces its
    label map block-wise, which requires ``n_target`` to divide ``spec.n_pixels``.
    """
    if n_target < 8:
        raise ValueError(f'Invalid target size {n_target}')
    if method not in SHARING_METHODS:
        raise ValueError(f'method must be one of {SHARING_METHODS}, got {method!r}')
    if n_target == spec.n_pixels:
        return make_phantom(spec)

    if method == 'native':
        scale = n_target / spec.n_pixels
        radii = tuple(max(1, int(round(r * scale))) if r else 0 for r in spec.calc_radius_px)
        return make_phantom(replace(spec, n_pixels=n_target, calc_radius_px=radii))

    if spec.n_pixels % n_target:
        raise ValueError(f'n_target={n_target} does not divide n_pixels={spec.n_pixels}')
    fine = make_phantom(spec)
    labels = _block_labels(fine.labels, spec.n_pixels // n_target)
    values = spec.weight_table()[labels]
    coarse_spec = replace(spec, n_pixels=n_target)
    return PhantomImage(ImageGrid.square(n_target, spec.fov_side, values), labels, coarse_spec)


def radial_power_spectrum(field):
    """Mean |F|^2 over integer radial frequency rings k = 0 .. n//2"""
    n = field.shape[0]
    power = np.abs(np.fft.fft2(field)) ** 2
    k = np.fft.fftfreq(n) * n
    ring = np.rint(np.hypot(k[None, :], k[:, None])).astype(int)
    keep = ring <= n // 2
    totals = np.bincount(ring[keep], weights=power[keep], minlength=n // 2 + 1)
    counts = np.bincount(ring[keep], minlength=n // 2 + 1)
    return totals / np.maximum(counts, 1)

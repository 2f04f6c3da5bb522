# apps/geometry/scan.py
"""Limited-angle fan-beam scan description and the image/sinogram containers."""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

DETECTOR_MODES = ('stationary', 'rotating')


def default_detector_length(fov_side, source_to_isocenter, source_to_detector):
    """Detector long enough for the magnified circle that circumscribes the FOV square."""
    magnification = source_to_detector / source_to_isocenter
    return fov_side * math.sqrt(2.0) * magnification


@dataclass(frozen=True)
class ScanGeometry:
    """Source arc, distances (cm) and flat detector of a DBT-style scan"""
    n_views: int = 25
    arc_span: float = 50.0
    source_to_isocenter: float = 50.0
    source_to_detector: float = 100.0
    n_detector_bins: int = 1024
    detector_length: float = None
    fov_side: float = 10.0
    detector_mode: str = 'stationary'

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError(f'n_views must be >= 1, got {self.n_views}')
        if self.arc_span <= 0:
            raise ValueError(f'arc_span must be positive, got {self.arc_span}')
        if not (self.source_to_detector > self.source_to_isocenter > 0):
            raise ValueError(
                'Distances must satisfy source_to_detector > source_to_isocenter > 0 '
                f'(got {self.source_to_detector}, {self.source_to_isocenter})'
            )
        if self.n_detector_bins < 1:
            raise ValueError(f'n_detector_bins must be >= 1, got {self.n_detector_bins}')
        if self.fov_side <= 0:
            raise ValueError(f'fov_side must be positive, got {self.fov_side}')
        if self.detector_length is None:
            object.__setattr__(
                self, 'detector_length',
                default_detector_length(self.fov_side, self.source_to_isocenter, self.source_to_detector),
            )
        if self.detector_length <= 0:
            raise ValueError(f'detector_length must be positive, got {self.detector_length}')
        if self.detector_mode not in DETECTOR_MODES:
            raise ValueError(f'detector_mode must be one of {DETECTOR_MODES}, got {self.detector_mode!r}')

    @property
    def bin_pitch(self):
        return self.detector_length / self.n_detector_bins

    @property
    def n_measurements(self):
        return self.n_views * self.n_detector_bins

    def as_dict(self):
        return asdict(self)

    def geometry_hash(self):
        """Stable short hash used to tie sinograms and images to their scan"""
        payload = json.dumps(self.as_dict(), sort_keys=True).encode('utf-8')
        return hashlib.sha256(payload).hexdigest()[:16]


def view_angles(geom):
    """Equally spaced source angles (degrees), symmetric about the detector normal."""
    if geom.n_views == 1:
        return [0.0]
    half = geom.arc_span / 2.0
    step = geom.arc_span / (geom.n_views - 1)
    return [-half + k * step for k in range(geom.n_views)]


@dataclass
class ImageGrid:
    """Square-pixel attenuation image (1/cm); rows run along depth z, columns along x"""
    n_rows: int
    n_cols: int
    pixel_size: float
    origin: tuple = (0.0, 0.0)
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError(f'Grid must have at least one pixel, got {self.n_rows}x{self.n_cols}')
        if not self.pixel_size > 0:
            raise ValueError(f'pixel_size must be positive, got {self.pixel_size}')
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        if self.values is None:
            self.values = np.zeros(self.shape, dtype=np.float64)
        else:
            self.values = np.asarray(self.values, dtype=np.float64).reshape(self.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError('Image values must be finite')

    @classmethod
    def square(cls, n_pixels, fov_side, values=None):
        return cls(n_rows=n_pixels, n_cols=n_pixels, pixel_size=fov_side / n_pixels, values=values)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def size(self):
        return self.n_rows * self.n_cols

    def with_values(self, values):
        return ImageGrid(self.n_rows, self.n_cols, self.pixel_size, self.origin, values)

    def x_edges(self):
        half = self.n_cols * self.pixel_size / 2.0
        return self.origin[0] - half + self.pixel_size * np.arange(self.n_cols + 1)

    def z_edges(self):
        """Horizontal pixel boundaries from the top row (nearest the source) downwards"""
        half = self.n_rows * self.pixel_size / 2.0
        return self.origin[1] + half - self.pixel_size * np.arange(self.n_rows + 1)

    def describe(self):
        return {
            'n_rows': self.n_rows,
            'n_cols': self.n_cols,
            'pixel_size': self.pixel_size,
            'origin': list(self.origin),
        }


@dataclass
class Sinogram:
    """Line integrals indexed by (view, detector bin)"""
    n_views: int
    n_bins: int
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((self.n_views, self.n_bins), dtype=np.float64)
        else:
            self.values = np.asarray(self.values, dtype=np.float64).reshape(self.n_views, self.n_bins)
        if not np.all(np.isfinite(self.values)):
            raise ValueError('Sinogram values must be finite')

    @classmethod
    def for_geometry(cls, geom, values=None):
        return cls(geom.n_views, geom.n_detector_bins, values)

    @property
    def shape(self):
        return (self.n_views, self.n_bins)

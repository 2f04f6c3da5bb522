# apps/geometry/projector.py
"""Ray-driven fan-beam system matrix with exact pixel intersection lengths.

One ray runs from the source to each detector-bin centre. Every ray is walked
through the pixel grid by collecting the parametric positions where it
crosses the vertical and horizontal pixel boundaries; consecutive crossings
bound a segment lying inside a single pixel, whose length becomes the matrix
entry. The matrix is stored in CSR form together with its CSR transpose, so
forward and adjoint products are plain sparse mat-vecs whose summation order
is the stored column order of each row, fixed at construction.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .scan import ImageGrid, Sinogram, view_angles

logger = logging.getLogger(__name__)

# Segments shorter than this (cm) come from rounding at pixel corners
MIN_SEGMENT = 1e-12
RAYS_PER_CHUNK = 512


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """Sparse X (rays x pixels) with its stored transpose"""
    matrix: sparse.csr_matrix
    adjoint_matrix: sparse.csr_matrix
    n_views: int
    n_bins: int
    n_rows: int
    n_cols: int
    pixel_size: float = 1.0
    origin: tuple = (0.0, 0.0)

    @classmethod
    def from_matrix(cls, matrix, n_views, n_bins, n_rows, n_cols, pixel_size=1.0, origin=(0.0, 0.0)):
        csr = sparse.csr_matrix(matrix, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.shape != (n_views * n_bins, n_rows * n_cols):
            raise ValueError(
                f'Matrix shape {csr.shape} does not match '
                f'{n_views}x{n_bins} rays and {n_rows}x{n_cols} pixels'
            )
        adjoint = csr.T.tocsr()
        adjoint.sort_indices()
        return cls(csr, adjoint, n_views, n_bins, n_rows, n_cols, pixel_size, tuple(origin))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def sinogram_shape(self):
        return (self.n_views, self.n_bins)

    @property
    def image_shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return self.matrix.nnz

    def forward(self, image):
        """X f on raw arrays: (n_rows, n_cols) -> (n_views, n_bins)"""
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise ValueError(f'Image shape {image.shape} does not match system matrix {self.image_shape}')
        return (self.matrix @ image.ravel()).reshape(self.sinogram_shape)

    def backward(self, sino):
        """X^T y on raw arrays: (n_views, n_bins) -> (n_rows, n_cols)"""
        sino = np.asarray(sino, dtype=np.float64)
        if sino.shape != self.sinogram_shape:
            raise ValueError(f'Sinogram shape {sino.shape} does not match system matrix {self.sinogram_shape}')
        return (self.adjoint_matrix @ sino.ravel()).reshape(self.image_shape)

    def ray_lengths(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def ray_endpoints(geom):
    """Source and detector-bin-centre coordinates (x, z) for every ray, in ray order.

    The isocentre is the origin, z points from the detector towards the source.
    """
    offsets = (np.arange(geom.n_detector_bins) - (geom.n_detector_bins - 1) / 2.0) * geom.bin_pitch
    sources = []
    targets = []
    for angle in view_angles(geom):
        theta = math.radians(angle)
        source = np.array([geom.source_to_isocenter * math.sin(theta),
                           geom.source_to_isocenter * math.cos(theta)])
        if geom.detector_mode == 'stationary':
            plane_z = -(geom.source_to_detector - geom.source_to_isocenter)
            bins = np.column_stack([offsets, np.full_like(offsets, plane_z)])
        else:
            normal = np.array([-math.sin(theta), -math.cos(theta)])
            along = np.array([math.cos(theta), -math.sin(theta)])
            centre = source + geom.source_to_detector * normal
            bins = centre[None, :] + offsets[:, None] * along[None, :]
        sources.append(np.repeat(source[None, :], geom.n_detector_bins, axis=0))
        targets.append(bins)
    return np.concatenate(sources), np.concatenate(targets)


def trace_ray(source, target, grid, x_edges, z_edges):
    """Pixel indices and intersection lengths of one source-to-bin segment."""
    direction = target - source
    length = math.hypot(direction[0], direction[1])
    crossings = [np.array([0.0, 1.0])]
    if direction[0] != 0.0:
        ax = (x_edges - source[0]) / direction[0]
        crossings.append(ax[(ax > 0.0) & (ax < 1.0)])
    if direction[1] != 0.0:
        az = (z_edges - source[1]) / direction[1]
        crossings.append(az[(az > 0.0) & (az < 1.0)])
    alphas = np.unique(np.concatenate(crossings))

    mid = 0.5 * (alphas[1:] + alphas[:-1])
    seg = np.diff(alphas) * length
    xm = source[0] + mid * direction[0]
    zm = source[1] + mid * direction[1]
    cols = np.floor((xm - x_edges[0]) / grid.pixel_size).astype(np.int64)
    rows = np.floor((z_edges[0] - zm) / grid.pixel_size).astype(np.int64)
    inside = (
        (cols >= 0) & (cols < grid.n_cols)
        & (rows >= 0) & (rows < grid.n_rows)
        & (seg > MIN_SEGMENT)
    )
    return rows[inside] * grid.n_cols + cols[inside], seg[inside]


def _trace_chunk(ray_ids, sources, targets, grid, x_edges, z_edges):
    ray_index, pixel_index, lengths = [], [], []
    for ray in ray_ids:
        pixels, seg = trace_ray(sources[ray], targets[ray], grid, x_edges, z_edges)
        ray_index.append(np.full(pixels.shape, ray, dtype=np.int64))
        pixel_index.append(pixels)
        lengths.append(seg)
    if not ray_index:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    return np.concatenate(ray_index), np.concatenate(pixel_index), np.concatenate(lengths)


def build_system_matrix(geom, grid, workers=1):
    """Trace every ray of ``geom`` through ``grid`` and return the sparse X.

    Rays are split into contiguous chunks traced on ``workers`` threads; the
    chunks are reassembled in ray order, so the result is identical for any
    worker count.
    """
    if not grid.pixel_size > 0:
        raise ValueError('Degenerate grid: pixel_size must be positive')
    if geom.n_detector_bins < 1:
        raise ValueError('Degenerate geometry: no detector bins')

    sources, targets = ray_endpoints(geom)
    x_edges = grid.x_edges()
    z_edges = grid.z_edges()
    n_rays = geom.n_measurements
    chunks = [range(start, min(start + RAYS_PER_CHUNK, n_rays))
              for start in range(0, n_rays, RAYS_PER_CHUNK)]

    def run(chunk):
        return _trace_chunk(chunk, sources, targets, grid, x_edges, z_edges)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]

    rays = np.concatenate([p[0] for p in parts])
    pixels = np.concatenate([p[1] for p in parts])
    lengths = np.concatenate([p[2] for p in parts])
    matrix = sparse.coo_matrix((lengths, (rays, pixels)), shape=(n_rays, grid.size))

    system = SystemMatrix.from_matrix(
        matrix, geom.n_views, geom.n_detector_bins, grid.n_rows, grid.n_cols,
        pixel_size=grid.pixel_size, origin=grid.origin,
    )
    logger.info(
        f'Built system matrix {system.shape[0]}x{system.shape[1]} '
        f'with {system.nnz} entries ({workers} worker(s))'
    )
    return system


def forward_project(A, f):
    """g = X f"""
    if f.shape != A.image_shape:
        raise ValueError(f'Image shape {f.shape} does not match system matrix {A.image_shape}')
    return Sinogram(A.n_views, A.n_bins, A.forward(f.values))


def back_project(A, y):
    """X^T y"""
    if y.shape != A.sinogram_shape:
        raise ValueError(f'Sinogram shape {y.shape} does not match system matrix {A.sinogram_shape}')
    return ImageGrid(A.n_rows, A.n_cols, A.pixel_size, A.origin, A.backward(y.values))

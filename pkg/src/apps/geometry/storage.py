# apps/geometry/storage.py
"""Flat little-endian binary arrays with a JSON sidecar.

``<name>.f32`` holds the raw row-major float32 samples; ``<name>.json``
records dimensions, pixel size, geometry hash, the SHA-256 of the binary and
any provenance the caller adds. Sidecars carry no timestamps, so repeating
a run with the same configuration reproduces them byte for byte.
"""
import hashlib
import json
from pathlib import Path

import numpy as np

from .scan import ImageGrid, Sinogram

FLOAT_DTYPE = '<f4'
LABEL_DTYPE = 'u1'


def content_hash(data):
    return hashlib.sha256(data).hexdigest()


def write_binary(path, array, dtype=FLOAT_DTYPE):
    """Write ``array`` as flat binary and return the SHA-256 of the bytes written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(array, dtype=dtype).tobytes()
    path.write_bytes(data)
    return content_hash(data)


def read_binary(path, shape, dtype=FLOAT_DTYPE):
    data = np.frombuffer(Path(path).read_bytes(), dtype=dtype)
    return data.reshape(shape)


def write_sidecar(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + '\n', encoding='utf-8')


def read_sidecar(path):
    return json.loads(Path(path).read_text(encoding='utf-8'))


def save_image(base, grid, geometry_hash=None, extra=None):
    """Write ``<base>.f32`` and ``<base>.json``; returns the sidecar payload."""
    base = Path(base)
    digest = write_binary(base.with_suffix('.f32'), grid.values)
    payload = {
        'kind': 'image',
        'file': base.with_suffix('.f32').name,
        'dtype': 'float32-le',
        'layout': 'row-major (row=z, col=x)',
        **grid.describe(),
        'geometry_hash': geometry_hash,
        'sha256': digest,
    }
    if extra:
        payload.update(extra)
    write_sidecar(base.with_suffix('.json'), payload)
    return payload


def load_image(base):
    base = Path(base)
    meta = read_sidecar(base.with_suffix('.json'))
    values = read_binary(base.with_suffix('.f32'), (meta['n_rows'], meta['n_cols']))
    return ImageGrid(meta['n_rows'], meta['n_cols'], meta['pixel_size'], tuple(meta['origin']), values)


def save_sinogram(base, sino, geom, extra=None):
    base = Path(base)
    digest = write_binary(base.with_suffix('.f32'), sino.values)
    payload = {
        'kind': 'sinogram',
        'file': base.with_suffix('.f32').name,
        'dtype': 'float32-le',
        'layout': 'row-major (row=view, col=bin)',
        'n_views': sino.n_views,
        'n_bins': sino.n_bins,
        'geometry': geom.as_dict(),
        'geometry_hash': geom.geometry_hash(),
        'sha256': digest,
    }
    if extra:
        payload.update(extra)
    write_sidecar(base.with_suffix('.json'), payload)
    return payload


def load_sinogram(base):
    base = Path(base)
    meta = read_sidecar(base.with_suffix('.json'))
    values = read_binary(base.with_suffix('.f32'), (meta['n_views'], meta['n_bins']))
    return Sinogram(meta['n_views'], meta['n_bins'], values)

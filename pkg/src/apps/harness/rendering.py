# apps/harness/rendering.py
"""8-bit grayscale PNGs with a fixed display window."""
from pathlib import Path

import numpy as np
from PIL import Image

RECONSTRUCTION_WINDOW = (0.0, 2.0)
DIFFERENCE_WINDOW = (-0.75, 0.75)


def to_gray(values, window):
    """Clamp to ``window`` and map linearly onto 0..255"""
    lo, hi = window
    if not hi > lo:
        raise ValueError(f'Display window must be increasing, got {window}')
    scaled = (np.clip(np.asarray(values, dtype=np.float64), lo, hi) - lo) / (hi - lo)
    return np.rint(scaled * 255.0).astype(np.uint8)


def render_png(path, values, window):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_gray(values, window), mode='L').save(path, format='PNG')
    return path

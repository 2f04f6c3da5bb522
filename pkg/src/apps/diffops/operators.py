# apps/diffops/operators.py
"""Forward differences along x (columns) and z (rows) with exact adjoints.

Arrays are (n_rows, n_cols) with rows running along z. ``neumann`` sets the
trailing difference to zero; ``periodic`` wraps around.
"""
import numpy as np

BOUNDARIES = ('neumann', 'periodic')


def _values(f):
    values = getattr(f, 'values', f)
    return np.asarray(values, dtype=np.float64)


def _check(values, boundary):
    if boundary not in BOUNDARIES:
        raise ValueError(f'Unknown boundary {boundary!r}; expected one of {BOUNDARIES}')
    if values.ndim != 2 or min(values.shape) < 2:
        raise ValueError(f'Finite differences need a 2D grid of at least 2x2, got {values.shape}')


def _forward(f, axis, boundary):
    f = _values(f)
    _check(f, boundary)
    if boundary == 'periodic':
        return np.roll(f, -1, axis=axis) - f
    out = np.zeros_like(f)
    if axis == 1:
        out[:, :-1] = f[:, 1:] - f[:, :-1]
    else:
        out[:-1, :] = f[1:, :] - f[:-1, :]
    return out


def _adjoint(p, axis, boundary):
    p = _values(p)
    _check(p, boundary)
    if boundary == 'periodic':
        return np.roll(p, 1, axis=axis) - p
    out = np.zeros_like(p)
    if axis == 1:
        out[:, :-1] -= p[:, :-1]
        out[:, 1:] += p[:, :-1]
    else:
        out[:-1, :] -= p[:-1, :]
        out[1:, :] += p[:-1, :]
    return out


def grad_x(f, boundary='neumann'):
    """f[i, j+1] - f[i, j]"""
    return _forward(f, 1, boundary)


def grad_z(f, boundary='neumann'):
    """f[i+1, j] - f[i, j]"""
    return _forward(f, 0, boundary)


def grad_adjoint_x(p, boundary='neumann'):
    return _adjoint(p, 1, boundary)


def grad_adjoint_z(p, boundary='neumann'):
    return _adjoint(p, 0, boundary)


def dtv_value(f, alpha_x, alpha_z, beta, boundary='neumann'):
    """alpha_x |dx f|_1 + alpha_z |dz f|_1 + beta |f|_1"""
    values = _values(f)
    return float(
        alpha_x * np.abs(grad_x(values, boundary)).sum()
        + alpha_z * np.abs(grad_z(values, boundary)).sum()
        + beta * np.abs(values).sum()
    )

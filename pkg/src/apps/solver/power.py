# apps/solver/power.py
import logging

import numpy as np

from .exceptions import DivergenceError

logger = logging.getLogger(__name__)

ADJOINT_TOLERANCE = 1e-8


def check_adjoint_pair(apply, adjoint, domain_shape, seed=0):
    """Spot check <A x, y> = <x, A^T y> on one random pair."""
    rng = np.random.default_rng([int(seed), 1])
    x = rng.standard_normal(domain_shape)
    ax = np.asarray(apply(x))
    y = rng.standard_normal(ax.shape)
    aty = np.asarray(adjoint(y))
    if aty.shape != tuple(domain_shape):
        raise ValueError(f'Adjoint maps to {aty.shape}, expected {tuple(domain_shape)}')
    lhs = float(np.vdot(ax, y))
    rhs = float(np.vdot(x, aty))
    scale = max(np.linalg.norm(ax) * np.linalg.norm(y), np.finfo(float).tiny)
    if abs(lhs - rhs) > ADJOINT_TOLERANCE * scale:
        raise ValueError(f'Operators are not an adjoint pair: <Ax, y>={lhs:.6e}, <x, A^T y>={rhs:.6e}')


def estimate_operator_norm(apply, adjoint, domain_shape, iters=100, seed=0, check=True):
    """Largest singular value of ``apply`` by power iteration on A^T A.

    The estimate never exceeds the true norm and does not decrease with
    ``iters``; the start vector is drawn from ``seed``.
    """
    if check:
        check_adjoint_pair(apply, adjoint, domain_shape, seed)
    rng = np.random.default_rng([int(seed), 0])
    x = rng.standard_normal(domain_shape)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        z = np.asarray(adjoint(apply(x)))
        norm = np.linalg.norm(z)
        if not np.isfinite(norm):
            raise DivergenceError('Non-finite iterate in power iteration')
        if norm == 0.0:
            return 0.0
        estimate = norm
        x = z / norm
    return float(np.sqrt(estimate))

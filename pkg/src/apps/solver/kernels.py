# apps/solver/kernels.py
"""Per-iteration update kernels on raw arrays."""
from dataclasses import replace

import numpy as np


def dual_update_fidelity(y, residual_filtered, sigma, eps_radius, method='shrink'):
    """Dual step for the constraint |R(X f - g)|_2 <= eps_radius.

    ``shrink`` is the conjugate prox of the ball indicator:
    u * max(0, 1 - sigma * eps_radius / |u|). ``ball_projection`` projects u
    onto the radius-eps_radius ball instead.
    """
    u = y + sigma * residual_filtered
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return np.zeros_like(u)
    if method == 'ball_projection':
        return u * min(1.0, eps_radius / norm)
    return u * max(0.0, 1.0 - sigma * eps_radius / norm)


def dual_update_l1(p, grad_fbar, sigma, alpha):
    # conjugate prox of alpha |.|_1: clamp to the l-inf ball
    return np.clip(p + sigma * grad_fbar, -alpha, alpha)


def primal_update(f, ascent_sum, tau, beta):
    """prox of tau*beta |.|_1 plus nonnegativity"""
    return np.maximum(0.0, f - tau * ascent_sum - tau * beta)


DUAL_FIELDS = ('y_hi', 'y_lo', 'p_x', 'p_z')
RELAXED_FIELDS = ('f',) + DUAL_FIELDS


def _blend(old, new, rho):
    if new is None:
        return None
    return old + rho * (new - old)


def reflect(prev, new):
    """Duals reflected through the predictor: 2 y_new - y_prev."""
    return replace(new, **{name: _blend(getattr(prev, name), getattr(new, name), 2.0)
                           for name in DUAL_FIELDS})


def relax(prev, new, rho, scope='primal_only'):
    """He-Yuan relaxation of the step ``prev`` -> ``new``.

    ``primal_only`` keeps ``new`` and sets f_bar = f + rho (f - f_prev).
    ``primal_and_dual`` moves every variable to x + rho (x_new - x); no
    extrapolated image is kept, so f_bar is the relaxed f.
    """
    if scope == 'primal_only':
        return replace(new, f_bar=new.f + rho * (new.f - prev.f))
    relaxed = {name: _blend(getattr(prev, name), getattr(new, name), rho) for name in RELAXED_FIELDS}
    return replace(new, f_bar=relaxed['f'], **relaxed)

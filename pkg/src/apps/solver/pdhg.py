# apps/solver/pdhg.py
"""Constrained primal-dual reconstruction with one or two filtered data channels.

Solves

    min  alpha_x |dx f|_1 + alpha_z |dz f|_1 + beta |f|_1
    s.t. f >= 0,  |R_c (X f - g)|_2 <= eps_c sqrt(size(g))  for each channel c

with one dual block per data channel and per difference direction, and
beta |f|_1 plus nonnegativity handled by the primal prox. Each iteration
costs one forward and one adjoint product with X: the projection of the
extrapolated image follows from the stored projections by linearity.
"""
import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from apps.diffops.operators import dtv_value, grad_adjoint_x, grad_adjoint_z, grad_x, grad_z
from apps.filters.hann import build_response, filter_rows
from apps.geometry.scan import ImageGrid
from apps.metrics.quality import image_rmse

from .exceptions import DivergenceError, StepSizeError
from .kernels import dual_update_fidelity, dual_update_l1, primal_update, reflect, relax
from .power import estimate_operator_norm

logger = logging.getLogger(__name__)

TELEMETRY_FIELDS = (
    'iteration', 'image_rmse', 'residual_hi_norm', 'residual_lo_norm',
    'objective_value', 'slack_hi', 'slack_lo',
)


@dataclass
class ReconstructionProblem:
    """System matrix, measured sinogram and optional ground truth"""
    A: object
    g: np.ndarray
    truth: np.ndarray = None

    def __post_init__(self):
        self.g = np.asarray(getattr(self.g, 'values', self.g), dtype=np.float64)
        if self.g.shape != self.A.sinogram_shape:
            raise ValueError(f'Sinogram shape {self.g.shape} does not match system matrix {self.A.sinogram_shape}')
        if self.truth is not None:
            self.truth = np.asarray(getattr(self.truth, 'values', self.truth), dtype=np.float64)
            if self.truth.shape != self.A.image_shape:
                raise ValueError(f'Truth shape {self.truth.shape} does not match grid {self.A.image_shape}')


@dataclass(frozen=True)
class StepSizes:
    tau: float
    sigma_hi: float
    sigma_lo: float
    sigma_x: float
    sigma_z: float
    norms: dict = field(default_factory=dict)

    def stability_product(self):
        """tau * sum(sigma_b |K_b|^2); below 1 for a stable run"""
        n = self.norms
        total = (self.sigma_hi * n.get('hi', 0.0) ** 2 + self.sigma_lo * n.get('lo', 0.0) ** 2
                 + self.sigma_x * n.get('x', 0.0) ** 2 + self.sigma_z * n.get('z', 0.0) ** 2)
        return self.tau * total


def compute_step_sizes(norms, sigma_ratio, margin=0.95):
    """tau = s, sigma_hi = sigma_x = sigma_z = s, sigma_lo = sigma_ratio * s.

    ``s`` is the largest value with tau * sum(sigma_b |K_b|^2) <= margin.
    """
    weighted = (norms.get('hi', 0.0) ** 2 + sigma_ratio * norms.get('lo', 0.0) ** 2
                + norms.get('x', 0.0) ** 2 + norms.get('z', 0.0) ** 2)
    if not math.isfinite(weighted) or weighted <= 0.0:
        raise StepSizeError(f'Cannot size steps: combined operator norm is {weighted}')
    s = math.sqrt(margin / weighted)
    lo = sigma_ratio * s if 'lo' in norms else 0.0
    steps = StepSizes(tau=s, sigma_hi=s, sigma_lo=lo, sigma_x=s, sigma_z=s, norms=dict(norms))
    if not steps.stability_product() < 1.0:
        raise StepSizeError(f'Stability product {steps.stability_product():.6f} is not below 1')
    return steps


@dataclass(frozen=True, eq=False)
class SolverState:
    """Iterates of one run. ``projection`` caches X f, ``projection_bar`` X f_bar."""
    f: np.ndarray
    f_bar: np.ndarray
    y_hi: np.ndarray
    y_lo: np.ndarray
    p_x: np.ndarray
    p_z: np.ndarray
    projection: np.ndarray
    projection_bar: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    image_rmse: float
    residual_hi_norm: float
    residual_lo_norm: float
    objective_value: float
    slack_hi: float
    slack_lo: float

    def as_row(self):
        return [getattr(self, name.name) for name in fields(self)]


@dataclass
class SolveResult:
    image: ImageGrid
    records: list
    steps: StepSizes


class PDHGSolver:
    """One reconstruction run over a fixed problem and configuration"""

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        A = problem.A
        n_bins = A.n_bins
        for spec in (cfg.filter_hi, cfg.filter_lo if cfg.two_channel else None):
            if spec is not None and spec.n_bins != n_bins:
                raise ValueError(f'Filter sized for {spec.n_bins} bins, sinogram has {n_bins}')
        self.r_hi = build_response(cfg.filter_hi)
        self.r_lo = build_response(cfg.filter_lo) if cfg.two_channel else None

        root_size = math.sqrt(problem.g.size)
        self.radius_hi = cfg.eps_hi * root_size
        self.radius_lo = cfg.eps_lo * root_size
        self.truth_norm = float(np.linalg.norm(problem.truth)) if problem.truth is not None else None
        self.steps = self.size_steps()

    def _grad(self, f):
        return grad_x(f, self.cfg.boundary), grad_z(f, self.cfg.boundary)

    def block_norms(self):
        A, cfg = self.problem.A, self.cfg
        shape = A.image_shape

        def estimate(apply, adjoint):
            return estimate_operator_norm(apply, adjoint, shape, iters=cfg.power_iters, seed=cfg.seed)

        norms = {
            'hi': estimate(lambda f: filter_rows(A.forward(f), self.r_hi),
                           lambda y: A.backward(filter_rows(y, self.r_hi))),
            'x': estimate(lambda f: grad_x(f, cfg.boundary), lambda p: grad_adjoint_x(p, cfg.boundary)),
            'z': estimate(lambda f: grad_z(f, cfg.boundary), lambda p: grad_adjoint_z(p, cfg.boundary)),
        }
        if self.r_lo is not None:
            norms['lo'] = estimate(lambda f: filter_rows(A.forward(f), self.r_lo),
                                   lambda y: A.backward(filter_rows(y, self.r_lo)))
        return norms

    def size_steps(self):
        norms = self.block_norms()
        steps = compute_step_sizes(norms, self.cfg.sigma_ratio, self.cfg.step_margin)
        logger.info(
            f'Step sizes for {self.cfg.mode}: tau={steps.tau:.4e} sigma_hi={steps.sigma_hi:.4e} '
            f'sigma_lo={steps.sigma_lo:.4e} norms=' + ', '.join(f'{k}={v:.4f}' for k, v in sorted(norms.items()))
        )
        return steps

    def initial_state(self):
        A = self.problem.A
        image = np.zeros(A.image_shape)
        sino = np.zeros(A.sinogram_shape)
        return SolverState(
            f=image, f_bar=image.copy(),
            y_hi=sino.copy(), y_lo=sino.copy() if self.r_lo is not None else None,
            p_x=image.copy(), p_z=image.copy(),
            projection=sino, projection_bar=sino.copy(),
        )

    def ascent_sum(self, state):
        """X^T (R_hi y_hi + R_lo y_lo) + dx^T p_x + dz^T p_z"""
        data = filter_rows(state.y_hi, self.r_hi)
        if state.y_lo is not None:
            data = data + filter_rows(state.y_lo, self.r_lo)
        return (self.problem.A.backward(data)
                + grad_adjoint_x(state.p_x, self.cfg.boundary)
                + grad_adjoint_z(state.p_z, self.cfg.boundary))

    def step(self, state):
        """One iteration.

        ``primal_only`` is the image-extrapolated scheme: duals see f_bar,
        the primal sees the new duals, and only f_bar is over-relaxed.
        ``primal_and_dual`` is the dual-first predictor-corrector: duals see
        f, the primal sees the reflected duals 2 y~ - y, and every variable
        moves to x + rho (x~ - x). Its f_bar always equals f.
        """
        cfg, steps, A = self.cfg, self.steps, self.problem.A
        joint = cfg.relaxation_scope == 'primal_and_dual'
        residual = state.projection_bar - self.problem.g

        y_hi = dual_update_fidelity(state.y_hi, filter_rows(residual, self.r_hi),
                                    steps.sigma_hi, self.radius_hi, cfg.fidelity_prox)
        y_lo = None
        if self.r_lo is not None:
            y_lo = dual_update_fidelity(state.y_lo, filter_rows(residual, self.r_lo),
                                        steps.sigma_lo, self.radius_lo, cfg.fidelity_prox)
        gx, gz = self._grad(state.f_bar)
        p_x = dual_update_l1(state.p_x, gx, steps.sigma_x, cfg.alpha_x)
        p_z = dual_update_l1(state.p_z, gz, steps.sigma_z, cfg.alpha_z)

        predicted = SolverState(
            f=state.f, f_bar=state.f_bar, y_hi=y_hi, y_lo=y_lo, p_x=p_x, p_z=p_z,
            projection=state.projection, projection_bar=state.projection_bar,
            iteration=state.iteration + 1,
        )
        duals = reflect(state, predicted) if joint else predicted
        f_new = primal_update(state.f, self.ascent_sum(duals), steps.tau, cfg.beta)
        predicted = replace(predicted, f=f_new)

        new = relax(state, predicted, cfg.rho, cfg.relaxation_scope)
        theta = 0.0 if joint else cfg.rho
        projection = A.forward(new.f)
        return replace(
            new,
            projection=projection,
            projection_bar=projection + theta * (projection - state.projection),
        )

    def image_of(self, state):
        # relaxed iterates can dip below zero when rho > 1; the predictor cannot
        return np.maximum(state.f, 0.0)

    def record(self, state):
        image = self.image_of(state)
        residual = state.projection - self.problem.g
        res_hi = float(np.linalg.norm(filter_rows(residual, self.r_hi)))
        if self.r_lo is not None:
            res_lo = float(np.linalg.norm(filter_rows(residual, self.r_lo)))
            slack_lo = self.radius_lo - res_lo
        else:
            res_lo = slack_lo = math.nan
        rmse = image_rmse(image, self.problem.truth) if self.problem.truth is not None else math.nan
        cfg = self.cfg
        return IterationRecord(
            iteration=state.iteration,
            image_rmse=rmse,
            residual_hi_norm=res_hi,
            residual_lo_norm=res_lo,
            objective_value=dtv_value(image, cfg.alpha_x, cfg.alpha_z, cfg.beta, cfg.boundary),
            slack_hi=self.radius_hi - res_hi,
            slack_lo=slack_lo,
        )

    def check_divergence(self, state, record):
        if not np.all(np.isfinite(state.f)):
            raise DivergenceError(f'Non-finite image at iteration {state.iteration}', record)
        if self.truth_norm:
            limit = self.cfg.divergence_factor * self.truth_norm
            norm = float(np.linalg.norm(state.f))
            if norm > limit:
                raise DivergenceError(
                    f'Image norm {norm:.4e} exceeds {limit:.4e} at iteration {state.iteration}', record)

    def run(self, on_record=None, on_checkpoint=None):
        cfg = self.cfg
        state = self.initial_state()
        records = []
        logger.info(f'Starting {cfg.mode} reconstruction: {cfg.n_iter} iterations on '
                    f'{self.problem.A.n_rows}x{self.problem.A.n_cols}')
        for _ in range(cfg.n_iter):
            state = self.step(state)
            record = self.record(state)
            self.check_divergence(state, record)
            records.append(record)
            if on_record is not None:
                on_record(record)
            if cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0 and on_checkpoint:
                on_checkpoint(state.iteration, self.image_of(state))
            if state.iteration % cfg.log_every == 0:
                logger.info(
                    f'[{cfg.mode}] iter {state.iteration}: rmse={record.image_rmse:.6f} '
                    f'res_hi={record.residual_hi_norm:.4e} objective={record.objective_value:.4f}'
                )
        A = self.problem.A
        image = ImageGrid(A.n_rows, A.n_cols, A.pixel_size, A.origin, self.image_of(state))
        logger.info(f'Finished {cfg.mode} reconstruction: final rmse={records[-1].image_rmse:.6f}')
        return SolveResult(image, records, self.steps)


def run(problem, cfg, on_record=None, on_checkpoint=None):
    """Solve ``problem`` with ``cfg``; returns the final image and per-iteration telemetry."""
    result = PDHGSolver(problem, cfg).run(on_record=on_record, on_checkpoint=on_checkpoint)
    return result.image, result.records

# apps/solver/config.py
import logging
from dataclasses import asdict, dataclass, field, replace

from apps.diffops.operators import BOUNDARIES
from apps.filters.hann import FilterSpec

logger = logging.getLogger(__name__)

MODES = ('single', 'two_channel')
RELAXATION_SCOPES = ('primal_only', 'primal_and_dual')
FIDELITY_PROXES = ('shrink', 'ball_projection')

# Per-sample data tolerance for noiseless studies
DEFAULT_EPS_HI = 1e-5
EPS_LO_FACTOR = 1.25


@dataclass(frozen=True)
class SolverConfig:
    """Everything one reconstruction run needs besides the data.

    ``eps_lo`` defaults to 1.25 x ``eps_hi``. ``filter_lo`` is required in
    two-channel mode and ignored in single mode.
    """
    mode: str = 'single'
    alpha_x: float = 1.95
    alpha_z: float = 1.95
    beta: float = 10.0
    eps_hi: float = DEFAULT_EPS_HI
    eps_lo: float = None
    sigma_ratio: float = 4.0
    rho: float = 1.75
    n_iter: int = 500
    filter_hi: FilterSpec = field(default_factory=lambda: FilterSpec('hann_sqrt', 4.0))
    filter_lo: FilterSpec = None
    power_iters: int = 100
    relaxation_scope: str = 'primal_only'
    fidelity_prox: str = 'shrink'
    boundary: str = 'neumann'
    step_margin: float = 0.95
    log_every: int = 50
    checkpoint_every: int = 0
    divergence_factor: float = 1e3
    seed: int = 0

    def __post_init__(self):
        if self.eps_lo is None:
            object.__setattr__(self, 'eps_lo', EPS_LO_FACTOR * self.eps_hi)
        if self.mode not in MODES:
            raise ValueError(f'mode must be one of {MODES}, got {self.mode!r}')
        if self.mode == 'two_channel' and self.filter_lo is None:
            raise ValueError('two_channel mode requires filter_lo')
        if not 0.0 < self.rho < 2.0:
            raise ValueError(f'rho must lie in (0, 2), got {self.rho}')
        if self.eps_hi < 0 or self.eps_lo < 0:
            raise ValueError(f'Data tolerances must be >= 0, got eps_hi={self.eps_hi}, eps_lo={self.eps_lo}')
        if self.n_iter < 1:
            raise ValueError(f'n_iter must be >= 1, got {self.n_iter}')
        if not self.sigma_ratio > 0:
            raise ValueError(f'sigma_ratio must be positive, got {self.sigma_ratio}')
        if min(self.alpha_x, self.alpha_z, self.beta) < 0:
            raise ValueError('alpha_x, alpha_z and beta must be >= 0')
        if self.power_iters < 1:
            raise ValueError(f'power_iters must be >= 1, got {self.power_iters}')
        if self.relaxation_scope not in RELAXATION_SCOPES:
            raise ValueError(f'relaxation_scope must be one of {RELAXATION_SCOPES}')
        if self.fidelity_prox not in FIDELITY_PROXES:
            raise ValueError(f'fidelity_prox must be one of {FIDELITY_PROXES}')
        if self.boundary not in BOUNDARIES:
            raise ValueError(f'boundary must be one of {BOUNDARIES}')
        if not 0.0 < self.step_margin < 1.0:
            raise ValueError(f'step_margin must lie in (0, 1), got {self.step_margin}')
        if self.log_every < 1 or self.checkpoint_every < 0:
            raise ValueError('log_every must be >= 1 and checkpoint_every >= 0')
        if not self.divergence_factor > 0:
            raise ValueError('divergence_factor must be positive')

    @property
    def two_channel(self):
        return self.mode == 'two_channel'

    def with_bins(self, n_bins):
        """Copy with both filters sized for ``n_bins`` detector bins"""
        lo = replace(self.filter_lo, n_bins=n_bins) if self.filter_lo else None
        return replace(self, filter_hi=replace(self.filter_hi, n_bins=n_bins), filter_lo=lo)

    def as_dict(self):
        data = asdict(self)
        data['filter_hi'] = self.filter_hi.as_dict()
        data['filter_lo'] = self.filter_lo.as_dict() if self.filter_lo else None
        return data

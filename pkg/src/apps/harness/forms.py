# apps/harness/forms.py
"""Validation of study configuration blocks.

Each block of the JSON study file is bound to a form; missing keys fall back
to the dataclass defaults, present keys are checked field by field and then
by the dataclass itself.
"""
import logging

from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

from apps.diffops.operators import BOUNDARIES
from apps.filters.hann import FILTER_KINDS, FilterSpec
from apps.geometry.scan import DETECTOR_MODES, ScanGeometry
from apps.metrics.spectrum import DIRECTIONS
from apps.phantom.generator import SHARING_METHODS, PhantomSpec
from apps.solver.config import FIDELITY_PROXES, RELAXATION_SCOPES, SolverConfig

from .config import ExperimentConfig, SpectrumSettings, apply_overrides, load_study_file, resolve_output_dir

logger = logging.getLogger(__name__)


def _choices(values):
    return [(v, v) for v in values]


def _raise_for(form, prefix):
    messages = []
    for name, errors in form.errors.items():
        where = prefix if name == '__all__' else f'{prefix}.{name}'
        messages.extend(f'{where}: {error}' for error in errors)
    raise ValidationError(messages)


class SpecForm(forms.Form):
    """Form whose clean() builds a frozen dataclass from the supplied fields"""
    spec_class = None
    prefix_name = ''

    def spec_kwargs(self):
        return {k: v for k, v in self.cleaned_data.items() if v is not None and v != ''}

    def clean(self):
        cleaned = super().clean()
        if not self.errors:
            try:
                self.spec = self.spec_class(**self.spec_kwargs())
            except (TypeError, ValueError) as exc:
                raise ValidationError(str(exc))
        return cleaned

    def validated(self):
        if not self.is_valid():
            _raise_for(self, self.prefix_name)
        return self.spec


class GeometryForm(SpecForm):
    spec_class = ScanGeometry
    prefix_name = 'geometry'

    n_views = forms.IntegerField(min_value=1, required=False)
    arc_span = forms.FloatField(min_value=0.0, required=False)
    source_to_isocenter = forms.FloatField(required=False)
    source_to_detector = forms.FloatField(required=False)
    n_detector_bins = forms.IntegerField(min_value=1, required=False)
    detector_length = forms.FloatField(required=False)
    fov_side = forms.FloatField(required=False)
    detector_mode = forms.ChoiceField(choices=_choices(DETECTOR_MODES), required=False)


class PhantomForm(SpecForm):
    spec_class = PhantomSpec
    prefix_name = 'phantom'

    noise_exponent = forms.FloatField(min_value=0.0, required=False)
    glandular_fraction = forms.FloatField(required=False)
    n_calcifications = forms.IntegerField(min_value=0, required=False)
    calc_radius_px = forms.JSONField(required=False)
    tissue_weights = forms.JSONField(required=False)
    sharing = forms.ChoiceField(choices=_choices(SHARING_METHODS), required=False)

    def __init__(self, *args, **kwargs):
        self.n_pixels = kwargs.pop('n_pixels')
        self.seed = kwargs.pop('seed')
        super().__init__(*args, **kwargs)

    def clean_glandular_fraction(self):
        value = self.cleaned_data['glandular_fraction']
        if value is not None and not 0.0 < value < 1.0:
            raise ValidationError(f'Glandular fraction must lie strictly between 0 and 1, got {value}.')
        return value

    def clean_calc_radius_px(self):
        value = self.cleaned_data['calc_radius_px']
        if value is None:
            return None
        if not isinstance(value, list) or len(value) != 2 or not all(isinstance(r, int) for r in value):
            raise ValidationError('calc_radius_px must be a [min, max] pair of integers.')
        return tuple(value)

    def clean_tissue_weights(self):
        value = self.cleaned_data['tissue_weights']
        if value is None:
            return None
        if not isinstance(value, list) or len(value) != 3 or not all(isinstance(w, (int, float)) for w in value):
            raise ValidationError('tissue_weights must list adipose, fibroglandular and calcification values.')
        return tuple(float(w) for w in value)

    def spec_kwargs(self):
        kwargs = super().spec_kwargs()
        kwargs.pop('sharing', None)
        return {**kwargs, 'n_pixels': self.n_pixels, 'seed': self.seed}


class FilterForm(SpecForm):
    spec_class = FilterSpec
    prefix_name = 'filters'

    kind = forms.ChoiceField(choices=_choices(FILTER_KINDS), required=False)
    cutoff_param = forms.FloatField(required=False)

    def __init__(self, *args, **kwargs):
        self.n_bins = kwargs.pop('n_bins')
        self.prefix_name = kwargs.pop('prefix_name', self.prefix_name)
        super().__init__(*args, **kwargs)

    def clean_cutoff_param(self):
        value = self.cleaned_data['cutoff_param']
        if value is not None and value <= 0:
            raise ValidationError(f'Cutoff parameter must be positive, got {value}.')
        return value

    def spec_kwargs(self):
        return {**super().spec_kwargs(), 'n_bins': self.n_bins}


class SolverForm(SpecForm):
    spec_class = SolverConfig
    prefix_name = 'solver'

    eps_hi = forms.FloatField(min_value=0.0, required=False)
    eps_lo = forms.FloatField(min_value=0.0, required=False)
    sigma_ratio = forms.FloatField(required=False)
    rho = forms.FloatField(required=False)
    n_iter = forms.IntegerField(min_value=1, required=False)
    power_iters = forms.IntegerField(min_value=1, required=False)
    relaxation_scope = forms.ChoiceField(choices=_choices(RELAXATION_SCOPES), required=False)
    fidelity_prox = forms.ChoiceField(choices=_choices(FIDELITY_PROXES), required=False)
    boundary = forms.ChoiceField(choices=_choices(BOUNDARIES), required=False)
    step_margin = forms.FloatField(required=False)
    log_every = forms.IntegerField(min_value=1, required=False)
    checkpoint_every = forms.IntegerField(min_value=0, required=False)
    divergence_factor = forms.FloatField(required=False)

    def __init__(self, *args, **kwargs):
        self.filter_hi = kwargs.pop('filter_hi')
        self.filter_lo = kwargs.pop('filter_lo')
        self.seed = kwargs.pop('seed')
        super().__init__(*args, **kwargs)

    def clean_rho(self):
        value = self.cleaned_data['rho']
        if value is not None and not 0.0 < value < 2.0:
            raise ValidationError(f'Relaxation parameter must lie in (0, 2), got {value}.')
        return value

    def clean_sigma_ratio(self):
        value = self.cleaned_data['sigma_ratio']
        if value is not None and value <= 0:
            raise ValidationError(f'sigma_ratio must be positive, got {value}.')
        return value

    def spec_kwargs(self):
        return {**super().spec_kwargs(), 'filter_hi': self.filter_hi, 'filter_lo': self.filter_lo,
                'seed': self.seed}


class StudyForm(forms.Form):
    seed = forms.IntegerField()
    output_dir = forms.CharField()
    resolutions = forms.JSONField()
    regularization = forms.JSONField()
    oscillation_window = forms.JSONField(required=False)

    def clean_resolutions(self):
        value = self.cleaned_data['resolutions']
        if not isinstance(value, list) or not value:
            raise ValidationError('resolutions must be a non-empty list of grid sizes.')
        if not all(isinstance(n, int) and n >= 8 for n in value):
            raise ValidationError('Every resolution must be an integer of at least 8.')
        return tuple(value)

    def clean_oscillation_window(self):
        value = self.cleaned_data['oscillation_window']
        if value is None:
            return (50, 200)
        if not isinstance(value, list) or len(value) != 2 or not value[0] < value[1]:
            raise ValidationError('oscillation_window must be an increasing [first, last] pair.')
        return tuple(int(v) for v in value)

    def clean(self):
        cleaned = super().clean()
        resolutions = cleaned.get('resolutions')
        table = cleaned.get('regularization')
        if resolutions is None or table is None:
            return cleaned
        if not isinstance(table, dict):
            raise ValidationError('regularization must map resolutions to {alpha, beta}.')
        parsed = {}
        for n in resolutions:
            entry = table.get(str(n))
            if not isinstance(entry, dict) or 'beta' not in entry:
                raise ValidationError(f'regularization has no (alpha, beta) entry for resolution {n}.')
            alpha_x = entry.get('alpha_x', entry.get('alpha'))
            alpha_z = entry.get('alpha_z', entry.get('alpha'))
            if alpha_x is None or alpha_z is None:
                raise ValidationError(f'regularization for {n} needs alpha or alpha_x/alpha_z.')
            values = (float(alpha_x), float(alpha_z), float(entry['beta']))
            if min(values) < 0:
                raise ValidationError(f'regularization weights for {n} must be >= 0.')
            parsed[n] = values
        cleaned['regularization'] = parsed
        return cleaned


class SpectrumForm(forms.Form):
    resolution = forms.IntegerField(min_value=8, required=False)
    direction = forms.ChoiceField(choices=_choices(DIRECTIONS), required=False)
    modes = forms.JSONField(required=False)
    filters = forms.JSONField(required=False)

    def clean_modes(self):
        value = self.cleaned_data['modes']
        if value is None:
            return None
        if not isinstance(value, list) or not all(isinstance(k, int) and k >= 0 for k in value):
            raise ValidationError('modes must be a list of non-negative integers.')
        return tuple(value)


def _block(data, name):
    block = data.get(name) or {}
    if not isinstance(block, dict):
        raise ValidationError(f'{name}: expected an object, got {type(block).__name__}')
    return block


def build_filter(block, n_bins, name):
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ValidationError(f'{name}: expected an object')
    return FilterForm(block, n_bins=n_bins, prefix_name=name).validated()


def build_experiment(data):
    """Validate a merged study dict into an ExperimentConfig; raises ValidationError."""
    study = StudyForm(data)
    if not study.is_valid():
        _raise_for(study, 'study')
    cleaned = study.cleaned_data

    geometry = GeometryForm(_block(data, 'geometry')).validated()

    phantom_block = _block(data, 'phantom')
    phantom_form = PhantomForm(phantom_block, n_pixels=max(cleaned['resolutions']), seed=cleaned['seed'])
    phantom = phantom_form.validated()
    sharing = phantom_form.cleaned_data.get('sharing') or 'native'

    filters = _block(data, 'filters')
    filter_hi = build_filter(filters.get('hi', {}), geometry.n_detector_bins, 'filters.hi')
    filter_lo = build_filter(filters.get('lo'), geometry.n_detector_bins, 'filters.lo')

    solver = SolverForm(_block(data, 'solver'), filter_hi=filter_hi, filter_lo=filter_lo,
                        seed=cleaned['seed']).validated()

    spectrum_form = SpectrumForm(_block(data, 'spectrum'))
    if not spectrum_form.is_valid():
        _raise_for(spectrum_form, 'spectrum')
    spectrum_data = spectrum_form.cleaned_data
    weightings = spectrum_data.get('filters') or [
        {'kind': 'identity', 'cutoff_param': 1.0},
        {'kind': 'hann_sqrt', 'cutoff_param': 4.0},
        {'kind': 'hann_sqrt', 'cutoff_param': 8.0},
    ]
    if not isinstance(weightings, list):
        raise ValidationError('spectrum.filters: expected a list of filters')
    spectrum = SpectrumSettings(
        resolution=spectrum_data.get('resolution') or 64,
        direction=spectrum_data.get('direction') or 'x',
        modes=spectrum_data.get('modes') or SpectrumSettings.modes,
        filters=tuple(build_filter(f, geometry.n_detector_bins, f'spectrum.filters[{i}]')
                      for i, f in enumerate(weightings)),
    )

    experiment = ExperimentConfig(
        geometry=geometry,
        phantom=phantom,
        phantom_sharing=sharing,
        resolutions=cleaned['resolutions'],
        regularization=cleaned['regularization'],
        solver=solver,
        output_dir=resolve_output_dir(cleaned['output_dir']),
        seed=cleaned['seed'],
        spectrum=spectrum,
        oscillation_window=cleaned['oscillation_window'],
        raw=data,
    )
    logger.info(
        f'Loaded study: resolutions={list(experiment.resolutions)} '
        f'geometry={geometry.geometry_hash()} output={experiment.output_dir}'
    )
    return experiment


def load_experiment(config_path=None, overrides=None, output_dir=None):
    """Read, override and validate a study file."""
    data = load_study_file(config_path or settings.TOMO_DEFAULT_CONFIG)
    data = apply_overrides(data, overrides)
    if output_dir:
        data['output_dir'] = str(output_dir)
    return build_experiment(data)

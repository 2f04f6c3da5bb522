# apps/harness/config.py
"""Study configuration: JSON file, dotted overrides and the validated result."""
import copy
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectrumSettings:
    resolution: int = 64
    direction: str = 'x'
    modes: tuple = (0, 1, 2, 4, 8, 16, 32)
    filters: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated study.

    ``phantom`` is defined on the finest grid of ``resolutions``;
    ``regularization`` maps each resolution to (alpha_x, alpha_z, beta).
    ``raw`` is the merged configuration echoed into every sidecar.
    """
    geometry: object
    phantom: object
    phantom_sharing: str
    resolutions: tuple
    regularization: dict
    solver: object
    output_dir: Path
    seed: int
    spectrum: SpectrumSettings
    oscillation_window: tuple = (50, 200)
    raw: dict = field(default_factory=dict)

    def solver_for(self, resolution, mode):
        """SolverConfig for one run; raises ValueError if the mode cannot be configured"""
        if resolution not in self.regularization:
            raise ValueError(f'No (alpha, beta) entry for resolution {resolution}')
        alpha_x, alpha_z, beta = self.regularization[resolution]
        return replace(self.solver, mode=mode, alpha_x=alpha_x, alpha_z=alpha_z, beta=beta)


def load_study_file(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise ValidationError(f'Config file {path} does not exist')
    except json.JSONDecodeError as exc:
        raise ValidationError(f'Config file {path} is not valid JSON: {exc}')


def parse_override(text):
    """``dotted.key=value``; the value is read as JSON, falling back to a plain string"""
    if '=' not in text:
        raise ValidationError(f'Override {text!r} must look like dotted.key=value')
    key, raw_value = text.split('=', 1)
    key = key.strip()
    if not key or any(not part for part in key.split('.')):
        raise ValidationError(f'Override {text!r} has an empty key')
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key.split('.'), value


def apply_overrides(data, overrides):
    merged = copy.deepcopy(data)
    for text in overrides or ():
        path, value = parse_override(text)
        node = merged
        for part in path[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[path[-1]] = value
        logger.info(f'Config override {".".join(path)} = {value!r}')
    return merged


def resolve_output_dir(value):
    path = Path(value)
    if not path.is_absolute():
        path = Path(settings.TOMO_OUTPUT_ROOT) / path
    return path

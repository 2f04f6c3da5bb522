# apps/harness/experiments.py
"""Study orchestration: phantom and data per resolution, paired runs, reports.

Every artifact gets a JSON sidecar with the configuration echo, the
SHA-256 of its bytes and the geometry hash. Paths inside reports are
relative to the study output directory.
"""
import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from apps.filters.hann import build_response, complementarity_deviation, write_response_csv
from apps.geometry.projector import build_system_matrix, forward_project
from apps.geometry.scan import ImageGrid
from apps.geometry.storage import (
    LABEL_DTYPE, content_hash, save_image, save_sinogram, write_binary, write_sidecar,
)
from apps.metrics.quality import (
    image_rmse, improvement_percent, oscillation_index, write_convergence_csv,
)
from apps.metrics.spectrum import mode_gain_profile, write_profile_csv
from apps.phantom.generator import downsample_consistent
from apps.solver.pdhg import PDHGSolver, ReconstructionProblem
from apps.solver.telemetry import TelemetryWriter

from .rendering import DIFFERENCE_WINDOW, RECONSTRUCTION_WINDOW, render_png

logger = logging.getLogger(__name__)

MODES = ('single', 'two_channel')
REPORT_COLUMNS = ('resolution', 'rmse_single', 'rmse_two', 'improvement_percent')


@dataclass
class PreparedResolution:
    resolution: int
    phantom: object
    system: object
    sinogram: object
    geometry_hash: str
    input_hash: str


@dataclass
class ReconstructionOutcome:
    mode: str
    image: ImageGrid
    records: list
    rmse: float
    files: dict = field(default_factory=dict)


@dataclass
class ComparisonReport:
    rows: list
    files: dict = field(default_factory=dict)


def artifact_sidecar(path, experiment, geometry_hash, **extra):
    """``<file>.json`` next to a CSV or PNG artifact"""
    path = Path(path)
    payload = {
        'file': path.name,
        'sha256': content_hash(path.read_bytes()),
        'geometry_hash': geometry_hash,
        'config': experiment.raw,
        **extra,
    }
    write_sidecar(path.with_name(path.name + '.json'), payload)
    return payload


def phantom_for(experiment, resolution):
    return downsample_consistent(experiment.phantom, resolution, experiment.phantom_sharing)


def compute_input_hash(phantom, sinogram, regularization):
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(phantom.values.values, dtype='<f8').tobytes())
    digest.update(np.ascontiguousarray(sinogram.values, dtype='<f8').tobytes())
    digest.update(json.dumps(list(regularization)).encode('utf-8'))
    return digest.hexdigest()


def prepare_resolution(experiment, resolution, sinogram=None, workers=None):
    """Phantom, system matrix and noiseless data g = X f for one grid size."""
    phantom = phantom_for(experiment, resolution)
    workers = workers or settings.TOMO_WORKERS
    system = build_system_matrix(experiment.geometry, phantom.values, workers=workers)
    if sinogram is None:
        sinogram = forward_project(system, phantom.values)
    elif sinogram.shape != system.sinogram_shape:
        raise ValueError(f'Sinogram shape {sinogram.shape} does not match geometry {system.sinogram_shape}')
    regularization = experiment.regularization.get(resolution, ())
    return PreparedResolution(
        resolution=resolution,
        phantom=phantom,
        system=system,
        sinogram=sinogram,
        geometry_hash=experiment.geometry.geometry_hash(),
        input_hash=compute_input_hash(phantom, sinogram, regularization),
    )


def write_phantom(experiment, phantom, out_dir):
    out_dir = Path(out_dir)
    geometry_hash = experiment.geometry.geometry_hash()
    extra = {'config': experiment.raw, 'phantom': phantom.spec.as_dict(), 'sharing': experiment.phantom_sharing}
    image_meta = save_image(out_dir / 'phantom', phantom.values, geometry_hash=geometry_hash, extra=extra)
    labels_path = out_dir / 'labels.u8'
    digest = write_binary(labels_path, phantom.labels, dtype=LABEL_DTYPE)
    write_sidecar(out_dir / 'labels.json', {
        'kind': 'labels',
        'file': labels_path.name,
        'dtype': 'uint8',
        'labels': {'0': 'background', '1': 'adipose', '2': 'fibroglandular', '3': 'calcification'},
        **phantom.values.describe(),
        'geometry_hash': geometry_hash,
        'sha256': digest,
        **extra,
    })
    logger.info(f'Wrote phantom {phantom.values.shape} to {out_dir}')
    return {'image': 'phantom.f32', 'labels': 'labels.u8', 'image_sha256': image_meta['sha256'], 'labels_sha256': digest}


def write_projection(experiment, prepared, out_dir):
    meta = save_sinogram(Path(out_dir) / 'sinogram', prepared.sinogram, experiment.geometry, extra={
        'config': experiment.raw,
        'resolution': prepared.resolution,
        'input_hash': prepared.input_hash,
        'noise': 'none',
    })
    return {'sinogram': 'sinogram.f32', 'sha256': meta['sha256']}


def reconstruct(experiment, prepared, mode, out_dir, n_iter=None, checkpoint_every=None):
    """One solver run with telemetry, checkpoints, final image and its rendering."""
    out_dir = Path(out_dir)
    cfg = experiment.solver_for(prepared.resolution, mode)
    if n_iter is not None:
        cfg = replace(cfg, n_iter=n_iter)
    if checkpoint_every is not None:
        cfg = replace(cfg, checkpoint_every=checkpoint_every)

    problem = ReconstructionProblem(prepared.system, prepared.sinogram, prepared.phantom.values)
    solver = PDHGSolver(problem, cfg)
    echo = {'config': experiment.raw, 'solver': cfg.as_dict(), 'input_hash': prepared.input_hash}
    grid = prepared.phantom.values

    def checkpoint(iteration, values):
        save_image(out_dir / 'checkpoints' / f'{mode}_iter_{iteration:05d}', grid.with_values(values),
                   geometry_hash=prepared.geometry_hash, extra={**echo, 'iteration': iteration})

    telemetry_path = out_dir / f'telemetry_{mode}.csv'
    with TelemetryWriter(telemetry_path) as writer:
        result = solver.run(on_record=writer, on_checkpoint=checkpoint)
    artifact_sidecar(telemetry_path, experiment, prepared.geometry_hash, **echo)

    rmse = image_rmse(result.image, prepared.phantom.values)
    steps = {'tau': result.steps.tau, 'sigma_hi': result.steps.sigma_hi, 'sigma_lo': result.steps.sigma_lo,
             'norms': result.steps.norms}
    save_image(out_dir / f'reconstruction_{mode}', result.image, geometry_hash=prepared.geometry_hash,
               extra={**echo, 'final_rmse': rmse, 'steps': steps})
    png = render_png(out_dir / f'reconstruction_{mode}.png', result.image.values, RECONSTRUCTION_WINDOW)
    artifact_sidecar(png, experiment, prepared.geometry_hash, window=list(RECONSTRUCTION_WINDOW), **echo)

    logger.info(f'{mode} reconstruction at {prepared.resolution}: rmse={rmse:.6f}')
    return ReconstructionOutcome(mode, result.image, result.records, rmse, files={
        'image': f'reconstruction_{mode}.f32',
        'png': png.name,
        'telemetry': telemetry_path.name,
    })


def _oscillation(records, window):
    try:
        return oscillation_index(records, window)
    except ValueError:
        return None


def compare_resolution(experiment, resolution, out_dir):
    """Single- and two-channel runs on identical inputs; returns one report row."""
    out_dir = Path(out_dir)
    prepared = prepare_resolution(experiment, resolution)
    write_projection(experiment, prepared, out_dir)
    outcomes = {mode: reconstruct(experiment, prepared, mode, out_dir) for mode in MODES}
    truth = prepared.phantom.values.values

    files = {}
    for mode, outcome in outcomes.items():
        diff = render_png(out_dir / f'difference_{mode}.png', outcome.image.values - truth, DIFFERENCE_WINDOW)
        artifact_sidecar(diff, experiment, prepared.geometry_hash, window=list(DIFFERENCE_WINDOW),
                         input_hash=prepared.input_hash)
        conv = write_convergence_csv(out_dir / f'convergence_{mode}.csv', outcome.records)
        artifact_sidecar(conv, experiment, prepared.geometry_hash, input_hash=prepared.input_hash)
        files[mode] = {**outcome.files, 'difference_png': diff.name, 'convergence': conv.name}

    cfg = experiment.solver_for(resolution, 'two_channel')
    deviation = complementarity_deviation(
        build_response(cfg.filter_hi), build_response(cfg.filter_lo), cfg.filter_hi.cutoff_frequency)

    rmse_single, rmse_two = outcomes['single'].rmse, outcomes['two_channel'].rmse
    return {
        'resolution': resolution,
        'rmse_single': rmse_single,
        'rmse_two': rmse_two,
        'improvement_percent': improvement_percent(rmse_single, rmse_two),
        'input_hash': prepared.input_hash,
        'oscillation_single': _oscillation(outcomes['single'].records, experiment.oscillation_window),
        'oscillation_two': _oscillation(outcomes['two_channel'].records, experiment.oscillation_window),
        'complementarity_deviation': deviation,
        'files': {mode: {k: f'res_{resolution}/{v}' for k, v in entry.items()} for mode, entry in files.items()},
    }


def write_comparison_report(experiment, rows, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=lambda r: r['resolution'])
    geometry_hash = experiment.geometry.geometry_hash()

    csv_path = out_dir / 'report.csv'
    with csv_path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([row['resolution'], f"{row['rmse_single']:.8f}", f"{row['rmse_two']:.8f}",
                             f"{row['improvement_percent']:.1f}"])
    artifact_sidecar(csv_path, experiment, geometry_hash,
                     input_hashes={str(r['resolution']): r['input_hash'] for r in rows})

    json_path = out_dir / 'report.json'
    write_sidecar(json_path, {
        'rows': rows,
        'oscillation_window': list(experiment.oscillation_window),
        'geometry_hash': geometry_hash,
        'config': experiment.raw,
    })
    logger.info(f'Comparison report for {[r["resolution"] for r in rows]} written to {out_dir}')
    return ComparisonReport(rows, files={'csv': csv_path.name, 'json': json_path.name})


def filter_slug(spec):
    if spec.kind == 'identity':
        return 'identity'
    return f'{spec.kind}_c{spec.cutoff_param:g}'


def run_spectrum(experiment, out_dir, resolution=None, direction=None, modes=None):
    """Mode-gain profiles of R X for each configured filter."""
    out_dir = Path(out_dir)
    settings_block = experiment.spectrum
    resolution = resolution or settings_block.resolution
    direction = direction or settings_block.direction
    modes = tuple(modes or settings_block.modes)

    grid = ImageGrid.square(resolution, experiment.geometry.fov_side)
    system = build_system_matrix(experiment.geometry, grid, workers=settings.TOMO_WORKERS)
    geometry_hash = experiment.geometry.geometry_hash()

    profiles = {}
    for spec in settings_block.filters:
        slug = filter_slug(spec)
        response = build_response(spec)
        profile = mode_gain_profile(system, response, modes, direction=direction)
        path = write_profile_csv(out_dir / f'profile_{slug}.csv', profile)
        artifact_sidecar(path, experiment, geometry_hash, filter=spec.as_dict(), resolution=resolution,
                         direction=direction)
        response_path = write_response_csv(out_dir / f'response_{slug}.csv', response)
        artifact_sidecar(response_path, experiment, geometry_hash, filter=spec.as_dict())
        profiles[slug] = profile
    return profiles

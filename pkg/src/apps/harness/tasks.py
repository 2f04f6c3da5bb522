# apps/harness/tasks.py
import logging
from pathlib import Path

from celery import shared_task

from apps.geometry.storage import load_sinogram
from apps.solver.exceptions import SolverError

from .experiments import compare_resolution, prepare_resolution, reconstruct
from .forms import build_experiment

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def run_resolution_pair(self, config_data, resolution, out_dir):
    """
    Run single- and two-channel reconstructions for one resolution.
    Returns the report row for that resolution.
    """
    try:
        experiment = build_experiment(config_data)
        row = compare_resolution(experiment, resolution, Path(out_dir))
        logger.info(
            f"Resolution {resolution}: single={row['rmse_single']:.6f} "
            f"two={row['rmse_two']:.6f} improvement={row['improvement_percent']}%"
        )
        return row
    except SolverError as e:
        logger.error(f"Solver failed at resolution {resolution}: {str(e)}")
        raise
    except Exception as e:
        logger.error(f"Error in run_resolution_pair({resolution}): {str(e)}")
        raise


@shared_task(bind=True)
def run_single_reconstruction(self, config_data, resolution, mode, out_dir, n_iter=None,
                              checkpoint_every=None, sinogram_path=None):
    """Run one reconstruction and return its final RMSE and files.
    Reads the data from ``sinogram_path`` when given, otherwise projects the phantom.
    """
    try:
        experiment = build_experiment(config_data)
        sinogram = load_sinogram(sinogram_path) if sinogram_path else None
        prepared = prepare_resolution(experiment, resolution, sinogram=sinogram)
        outcome = reconstruct(experiment, prepared, mode, Path(out_dir), n_iter=n_iter,
                              checkpoint_every=checkpoint_every)
        return {
            'status': 'success',
            'resolution': resolution,
            'mode': mode,
            'rmse': outcome.rmse,
            'input_hash': prepared.input_hash,
            'files': outcome.files,
        }
    except Exception as e:
        logger.error(f"Error in run_single_reconstruction({resolution}, {mode}): {str(e)}")
        raise

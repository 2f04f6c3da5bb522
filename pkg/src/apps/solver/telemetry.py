# apps/solver/telemetry.py
import csv
import logging
from pathlib import Path

from .pdhg import TELEMETRY_FIELDS

logger = logging.getLogger(__name__)


class TelemetryWriter:
    """Streams one CSV row per IterationRecord; use as ``on_record`` callback."""

    def __init__(self, path):
        self.path = Path(path)
        self.rows = 0
        self._handle = None
        self._writer = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open('w', newline='', encoding='utf-8')
        self._writer = csv.writer(self._handle)
        self._writer.writerow(TELEMETRY_FIELDS)
        return self

    def __exit__(self, exc_type, exc, tb):
        self._handle.close()
        if exc_type is not None:
            logger.error(f'Telemetry {self.path} closed early after {self.rows} rows: {exc}')
        return False

    def __call__(self, record):
        self._writer.writerow([record.iteration] + [f'{v:.10g}' for v in record.as_row()[1:]])
        self._handle.flush()
        self.rows += 1


def read_telemetry(path):
    with Path(path).open(newline='', encoding='utf-8') as handle:
        return [
            {key: (int(value) if key == 'iteration' else float(value)) for key, value in row.items()}
            for row in csv.DictReader(handle)
        ]

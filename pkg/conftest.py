"""Configure Django for pytest, mirroring ``manage.py test``."""
import os
import sys
from pathlib import Path

SRC = Path(__file__).resolve().parent / 'src'
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tomovision.settings')

import django  # noqa: E402

django.setup()

_db_state = {}


def pytest_sessionstart(session):
    from django.test.utils import setup_databases, setup_test_environment

    setup_test_environment()
    _db_state['old_config'] = setup_databases(verbosity=0, interactive=False)


def pytest_sessionfinish(session, exitstatus):
    from django.test.utils import teardown_databases, teardown_test_environment

    if 'old_config' in _db_state:
        teardown_databases(_db_state.pop('old_config'), verbosity=0)
        teardown_test_environment()

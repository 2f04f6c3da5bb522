# celery.py (in project root)
import os
from celery import Celery

# Set the default Django settings module for the 'celery' program.
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tomovision.settings')

app = Celery('tomovision')

# Using a string here means the worker doesn't have to serialize
# the configuration object to child processes.
app.config_from_object('django.conf:settings', namespace='CELERY')

# Load task modules from all registered Django apps.
app.autodiscover_tasks()

app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    result_expires=86400,

    # One reconstruction per worker process at a time; runs are long and memory heavy
    worker_prefetch_multiplier=1,
    worker_max_tasks_per_child=20,

    worker_hijack_root_logger=False,
    worker_log_color=False,

    task_reject_on_worker_lost=True,
    task_acks_late=True,

    task_default_queue='default',
)

app.conf.task_routes = {
    'apps.harness.tasks.run_resolution_pair': {
        'queue': 'reconstruction',
    },
    'apps.harness.tasks.run_single_reconstruction': {
        'queue': 'reconstruction',
    },
}

# Logging Configuration
app.conf.worker_log_format = '[%(asctime)s: %(levelname)s/%(processName)s] %(message)s'
app.conf.worker_task_log_format = '[%(asctime)s: %(levelname)s/%(processName)s][%(task_name)s(%(task_id)s)] %(message)s'

if __name__ == '__main__':
    app.start()

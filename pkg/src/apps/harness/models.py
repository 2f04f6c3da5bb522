# apps/harness/models.py
import logging
import uuid

from django.db import models, transaction
from django.utils import timezone

logger = logging.getLogger(__name__)


class ExperimentRun(models.Model):
    """Provenance of one harness command invocation"""
    KIND_CHOICES = [
        ('phantom', 'Phantom'),
        ('project', 'Projection'),
        ('reconstruct', 'Reconstruction'),
        ('compare', 'Comparison'),
        ('spectrum', 'Spectrum'),
    ]

    MODE_CHOICES = [
        ('', 'Not applicable'),
        ('single', 'Single channel'),
        ('two_channel', 'Two channel'),
        ('both', 'Both modes'),
    ]

    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    mode = models.CharField(max_length=20, choices=MODE_CHOICES, blank=True, default='')
    resolution = models.PositiveIntegerField(null=True, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')

    config = models.JSONField(default=dict, blank=True)
    input_hash = models.CharField(max_length=64, blank=True)
    final_rmse = models.FloatField(null=True, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    summary = models.JSONField(default=dict, blank=True)
    error_message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['kind', '-created_at'], name='harness_run_kind_idx'),
            models.Index(fields=['status', '-created_at'], name='harness_run_status_idx'),
        ]

    def __str__(self):
        return f"{self.kind} {self.resolution or ''} - {self.status}"

    def mark_running(self):
        self.status = 'running'
        self.save(update_fields=['status'])

    def mark_completed(self, **fields):
        for name, value in fields.items():
            setattr(self, name, value)
        self.status = 'completed'
        self.completed_at = timezone.now()
        self.save()

    def mark_failed(self, message):
        self.status = 'failed'
        self.error_message = message
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'completed_at'])


class SystemLog(models.Model):
    """Audit trail of commands and failures"""
    LOG_LEVELS = [
        ('DEBUG', 'Debug'),
        ('INFO', 'Info'),
        ('WARNING', 'Warning'),
        ('ERROR', 'Error'),
        ('CRITICAL', 'Critical'),
    ]

    ACTION_TYPES = [
        ('command', 'Command Invoked'),
        ('reconstruction', 'Reconstruction Finished'),
        ('validation_error', 'Validation Error'),
        ('solver_error', 'Solver Error'),
        ('system_error', 'System Error'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    run = models.ForeignKey(ExperimentRun, on_delete=models.SET_NULL, null=True, blank=True, related_name='logs')
    action_type = models.CharField(max_length=20, choices=ACTION_TYPES)
    level = models.CharField(max_length=10, choices=LOG_LEVELS, default='INFO')
    message = models.TextField()
    metadata = models.JSONField(default=dict, blank=True)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['action_type', '-created_at'], name='harness_log_action_idx'),
            models.Index(fields=['level', '-created_at'], name='harness_log_level_idx'),
        ]

    def __str__(self):
        return f"{self.action_type} - {self.level} - {self.created_at}"

    @classmethod
    def record(cls, action_type, message, level='INFO', run=None, **metadata):
        try:
            with transaction.atomic():
                return cls.objects.create(action_type=action_type, level=level, message=message,
                                          run=run, metadata=metadata)
        except Exception as e:
            logger.error(f"Could not write system log entry '{message}': {str(e)}")
            return None

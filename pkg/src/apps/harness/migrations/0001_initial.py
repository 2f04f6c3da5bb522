# Generated by Django 4.2.7 on 2026-10-19 09:12

from django.db import migrations, models
import django.db.models.deletion
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('kind', models.CharField(choices=[('phantom', 'Phantom'), ('project', 'Projection'), ('reconstruct', 'Reconstruction'), ('compare', 'Comparison'), ('spectrum', 'Spectrum')], max_length=20)),
                ('mode', models.CharField(blank=True, choices=[('', 'Not applicable'), ('single', 'Single channel'), ('two_channel', 'Two channel'), ('both', 'Both modes')], default='', max_length=20)),
                ('resolution', models.PositiveIntegerField(blank=True, null=True)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('input_hash', models.CharField(blank=True, max_length=64)),
                ('final_rmse', models.FloatField(blank=True, null=True)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('error_message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['kind', '-created_at'], name='harness_run_kind_idx'), models.Index(fields=['status', '-created_at'], name='harness_run_status_idx')],
            },
        ),
        migrations.CreateModel(
            name='SystemLog',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('action_type', models.CharField(choices=[('command', 'Command Invoked'), ('reconstruction', 'Reconstruction Finished'), ('validation_error', 'Validation Error'), ('solver_error', 'Solver Error'), ('system_error', 'System Error')], max_length=20)),
                ('level', models.CharField(choices=[('DEBUG', 'Debug'), ('INFO', 'Info'), ('WARNING', 'Warning'), ('ERROR', 'Error'), ('CRITICAL', 'Critical')], default='INFO', max_length=10)),
                ('message', models.TextField()),
                ('metadata', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='logs', to='harness.experimentrun')),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['action_type', '-created_at'], name='harness_log_action_idx'), models.Index(fields=['level', '-created_at'], name='harness_log_level_idx')],
            },
        ),
    ]

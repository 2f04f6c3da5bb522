# apps/harness/admin.py
from django.contrib import admin

from .models import ExperimentRun, SystemLog


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """Experiment Run Admin"""
    list_display = ('kind', 'mode', 'resolution', 'status', 'final_rmse', 'created_at', 'completed_at')
    list_filter = ('kind', 'mode', 'status', 'created_at')
    search_fields = ('input_hash', 'output_dir', 'error_message')
    readonly_fields = (
        'id', 'kind', 'mode', 'resolution', 'config', 'input_hash', 'final_rmse',
        'output_dir', 'summary', 'error_message', 'created_at', 'completed_at',
    )
    date_hierarchy = 'created_at'

    fieldsets = (
        ('Run', {
            'fields': ('id', 'kind', 'mode', 'resolution', 'status')
        }),
        ('Results', {
            'fields': ('final_rmse', 'input_hash', 'output_dir', 'summary', 'error_message')
        }),
        ('Configuration', {
            'fields': ('config',),
            'classes': ('collapse',)
        }),
        ('Timestamps', {
            'fields': ('created_at', 'completed_at'),
            'classes': ('collapse',)
        }),
    )


@admin.register(SystemLog)
class SystemLogAdmin(admin.ModelAdmin):
    """System Log Admin"""
    list_display = ('action_type', 'level', 'get_message_preview', 'run', 'created_at')
    list_filter = ('action_type', 'level', 'created_at')
    search_fields = ('message',)
    readonly_fields = ('id', 'run', 'action_type', 'level', 'message', 'metadata', 'created_at')
    date_hierarchy = 'created_at'

    def get_message_preview(self, obj):
        return obj.message[:80] + ('...' if len(obj.message) > 80 else '')
    get_message_preview.short_description = 'Message'

    def has_add_permission(self, request):
        return False

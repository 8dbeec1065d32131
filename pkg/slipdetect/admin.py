from django.contrib import admin
from .models import EvaluationRecord, TrainingRun


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ["name", "preset", "variant", "modality", "seq_len", "seed", "best_epoch", "created_at"]
    list_filter = ["preset", "modality", "arch"]
    search_fields = ["name", "variant", "config_digest"]
    date_hierarchy = "created_at"


@admin.register(EvaluationRecord)
class EvaluationRecordAdmin(admin.ModelAdmin):
    list_display = ["run", "split", "windows", "accuracy", "precision", "recall", "f1"]
    list_filter = ["split"]
    readonly_fields = ["run", "split", "windows", "accuracy", "precision", "recall", "f1", "confusion"]

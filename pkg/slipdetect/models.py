"""
Slip Detection Models

Ledger of training and evaluation runs:
    - TrainingRun: one trained model (variant + seed) and where its artifacts live
    - EvaluationRecord: metrics of a run on one split

The numerical pipeline never needs these tables; they exist so runs can be
listed and compared later (manage.py report, GET /api/slip/runs/).
"""

from django.db import models


class TrainingRun(models.Model):
    """
    One training invocation.

    The checkpoint on disk is the source of truth for weights; this row only
    records how it was produced.
    """

    name = models.CharField(max_length=255, help_text="Run label, e.g. 'fused/seed0'")
    preset = models.CharField(
        max_length=64, blank=True, default="", help_text="Experiment preset (empty for ad-hoc train)"
    )
    variant = models.CharField(max_length=64, help_text="Variant within the preset, e.g. 'T=13'")
    modality = models.CharField(max_length=32, db_index=True, help_text="tactile_only, visual_only or fused")
    arch = models.CharField(max_length=16, default="mstcn", help_text="mstcn or tcn")
    seq_len = models.PositiveIntegerField(help_text="Window length T in frames")
    seed = models.IntegerField(default=0)
    lr = models.FloatField(help_text="Adam learning rate")
    batch_size = models.PositiveIntegerField()
    epochs_run = models.PositiveIntegerField(default=0)
    best_epoch = models.PositiveIntegerField(default=0)
    config_digest = models.CharField(max_length=64, db_index=True, help_text="sha256 of the model config")
    checkpoint_path = models.CharField(max_length=1024, blank=True, default="")
    report_dir = models.CharField(max_length=1024, blank=True, default="")
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ["-created_at", "-id"]
        indexes = [
            models.Index(fields=["preset", "variant"], name="idx_run_preset_variant"),
        ]

    def __str__(self):
        return f"{self.name} ({self.modality}, T={self.seq_len}, seed={self.seed})"


class EvaluationRecord(models.Model):
    """
    Metrics of one run on one split. Positive class is "stable".
    """

    run = models.ForeignKey(
        TrainingRun,
        on_delete=models.CASCADE,
        related_name="evaluations",
        help_text="The run whose checkpoint was evaluated",
    )
    split = models.CharField(max_length=16, default="test")
    windows = models.PositiveIntegerField(default=0, help_text="Number of evaluated windows")
    accuracy = models.FloatField()
    precision = models.FloatField()
    recall = models.FloatField()
    f1 = models.FloatField()
    # rows = actual (slip, stable), columns = predicted
    confusion = models.JSONField(default=list)
    per_object = models.JSONField(default=dict, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at", "-id"]
        verbose_name = "Evaluation Record"
        verbose_name_plural = "Evaluation Records"

    def __str__(self):
        return f"{self.run.name} [{self.split}] acc={self.accuracy:.4f} f1={self.f1:.4f}"

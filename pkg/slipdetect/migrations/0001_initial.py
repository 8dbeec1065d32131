# Generated by Django 4.2.26 on 2026-10-16 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="TrainingRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("name", models.CharField(help_text="Run label, e.g. 'fused/seed0'", max_length=255)),
                (
                    "preset",
                    models.CharField(
                        blank=True,
                        default="",
                        help_text="Experiment preset (empty for ad-hoc train)",
                        max_length=64,
                    ),
                ),
                ("variant", models.CharField(help_text="Variant within the preset, e.g. 'T=13'", max_length=64)),
                (
                    "modality",
                    models.CharField(
                        db_index=True, help_text="tactile_only, visual_only or fused", max_length=32
                    ),
                ),
                ("arch", models.CharField(default="mstcn", help_text="mstcn or tcn", max_length=16)),
                ("seq_len", models.PositiveIntegerField(help_text="Window length T in frames")),
                ("seed", models.IntegerField(default=0)),
                ("lr", models.FloatField(help_text="Adam learning rate")),
                ("batch_size", models.PositiveIntegerField()),
                ("epochs_run", models.PositiveIntegerField(default=0)),
                ("best_epoch", models.PositiveIntegerField(default=0)),
                (
                    "config_digest",
                    models.CharField(db_index=True, help_text="sha256 of the model config", max_length=64),
                ),
                ("checkpoint_path", models.CharField(blank=True, default="", max_length=1024)),
                ("report_dir", models.CharField(blank=True, default="", max_length=1024)),
                ("created_at", models.DateTimeField(auto_now_add=True, db_index=True)),
            ],
            options={
                "ordering": ["-created_at", "-id"],
                "indexes": [
                    models.Index(fields=["preset", "variant"], name="idx_run_preset_variant"),
                ],
            },
        ),
        migrations.CreateModel(
            name="EvaluationRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("split", models.CharField(default="test", max_length=16)),
                ("windows", models.PositiveIntegerField(default=0, help_text="Number of evaluated windows")),
                ("accuracy", models.FloatField()),
                ("precision", models.FloatField()),
                ("recall", models.FloatField()),
                ("f1", models.FloatField()),
                ("confusion", models.JSONField(default=list)),
                ("per_object", models.JSONField(blank=True, default=dict)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                (
                    "run",
                    models.ForeignKey(
                        help_text="The run whose checkpoint was evaluated",
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="evaluations",
                        to="slipdetect.trainingrun",
                    ),
                ),
            ],
            options={
                "verbose_name": "Evaluation Record",
                "verbose_name_plural": "Evaluation Records",
                "ordering": ["-created_at", "-id"],
            },
        ),
    ]

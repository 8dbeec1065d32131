"""
Slip Detection API Serializers

Validation for HTTP payloads and for train/experiment configs arriving from
command flags or TOML files.
"""

import numpy as np
from rest_framework import serializers

from slipdetect.encoders import VISUAL_MODES
from slipdetect.exceptions import InputValidationError
from slipdetect.network import ARCHITECTURES, MODALITIES, READOUTS

# Constants
PRESET_CHOICES = ["seq_len_sweep", "modality_ablation", "arch_comparison", "stiffness_probe"]
SEQ_LEN_MIN = 1
MAX_SEEDS = 16


def validated(serializer_class, data, **kwargs):
    """Run a serializer and turn field errors into the domain validation error."""
    serializer = serializer_class(data=data, **kwargs)
    if not serializer.is_valid():
        raise InputValidationError(
            "invalid configuration: "
            + "; ".join(f"{field}: {errors}" for field, errors in serializer.errors.items()),
            errors=serializer.errors,
        )
    return serializer.validated_data


class TrainConfigSerializer(serializers.Serializer):
    lr = serializers.FloatField(min_value=0.0, required=False, help_text="Adam learning rate (> 0)")
    batch_size = serializers.IntegerField(min_value=1, default=8)
    epochs = serializers.IntegerField(min_value=0, default=10)
    seed = serializers.IntegerField(default=0)
    seq_len = serializers.IntegerField(min_value=SEQ_LEN_MIN, default=13)
    modality = serializers.ChoiceField(choices=list(MODALITIES), default="fused")
    early_stop_patience = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    target_train_accuracy = serializers.FloatField(
        min_value=0.0, max_value=1.0, required=False, allow_null=True
    )
    checkpoint_every = serializers.IntegerField(min_value=0, default=0)
    val_objects = serializers.IntegerField(
        min_value=0, default=0, help_text="Training objects held out for validation"
    )

    def validate_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be > 0.")
        return value

    def validate_target_train_accuracy(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Target accuracy must be in (0, 1].")
        return value


class ModelSectionSerializer(serializers.Serializer):
    arch = serializers.ChoiceField(choices=list(ARCHITECTURES), default="mstcn")
    readout = serializers.ChoiceField(choices=list(READOUTS), default="last")
    visual_mode = serializers.ChoiceField(choices=list(VISUAL_MODES), default="embedding_passthrough")
    visual_frozen = serializers.BooleanField(default=False)


class DataSectionSerializer(serializers.Serializer):
    """
    Either an existing dataset ``root`` or a synthetic corpus description.
    """

    root = serializers.CharField(required=False, allow_blank=False)
    n_objects = serializers.IntegerField(min_value=2, default=50)
    episodes_per_object = serializers.IntegerField(min_value=1, default=10)
    slip_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    noise_sigma = serializers.FloatField(min_value=0.0, default=0.0)
    frames = serializers.IntegerField(min_value=13, default=20)
    embed_dim = serializers.IntegerField(min_value=1, default=8)
    master_seed = serializers.IntegerField(default=0)
    stride = serializers.IntegerField(min_value=1, default=1)


class ExperimentSpecSerializer(serializers.Serializer):
    name = serializers.CharField(required=False, max_length=128)
    preset = serializers.ChoiceField(choices=PRESET_CHOICES)
    seeds = serializers.ListField(
        child=serializers.IntegerField(), required=False, max_length=MAX_SEEDS
    )
    seq_lens = serializers.ListField(
        child=serializers.IntegerField(min_value=SEQ_LEN_MIN),
        required=False,
        help_text="Window lengths for seq_len_sweep (default 8..13)",
    )
    data = DataSectionSerializer(required=False)
    train = TrainConfigSerializer(required=False)
    model = ModelSectionSerializer(required=False)

    def validate_seeds(self, value):
        if value == []:
            raise serializers.ValidationError("Cannot be an empty list. Omit the field or provide at least one seed.")
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Seeds must be distinct.")
        return value

    def validate_seq_lens(self, value):
        if value == []:
            raise serializers.ValidationError("Cannot be an empty list. Omit the field or provide at least one length.")
        return value


class WindowPayloadSerializer(serializers.Serializer):
    """
    One window for POST /api/slip/predict/.

    tactile: T x 3 x 4 x 4 images, or T x 4 x 4 x 3 raw forces with forces=true.
    visual: T x E embeddings or T x 3 x 32 x 32 images.
    """

    checkpoint = serializers.CharField(help_text="Path to a checkpoint file on the server")
    tactile = serializers.JSONField(required=False, help_text="Nested list of tactile frames")
    visual = serializers.JSONField(required=False, help_text="Nested list of visual frames")
    forces = serializers.BooleanField(default=False, help_text="tactile holds raw forces in newtons")

    def _array(self, value, field):
        try:
            array = np.asarray(value, dtype=np.float64)
        except (TypeError, ValueError):
            raise serializers.ValidationError({field: "Must be a rectangular nested list of numbers."})
        if array.ndim < 2:
            raise serializers.ValidationError({field: "Must hold at least one frame."})
        if not np.all(np.isfinite(array)):
            raise serializers.ValidationError({field: "Values must be finite."})
        return array

    def validate(self, data):
        if data.get("tactile") is None and data.get("visual") is None:
            raise serializers.ValidationError("Provide tactile and/or visual frames.")
        for field in ("tactile", "visual"):
            if data.get(field) is not None:
                data[field] = self._array(data[field], field)
        tactile, visual = data.get("tactile"), data.get("visual")
        if tactile is not None and visual is not None and len(tactile) != len(visual):
            raise serializers.ValidationError(
                {"visual": f"Frame count {len(visual)} differs from tactile frame count {len(tactile)}."}
            )
        return data


class ConfusionSerializer(serializers.Serializer):
    tp = serializers.IntegerField(min_value=0)
    tn = serializers.IntegerField(min_value=0)
    fp = serializers.IntegerField(min_value=0)
    fn = serializers.IntegerField(min_value=0)

    def validate(self, data):
        if sum(data.values()) == 0:
            raise serializers.ValidationError("At least one count must be positive.")
        return data


class EvaluationRecordSerializer(serializers.Serializer):
    split = serializers.CharField()
    windows = serializers.IntegerField()
    accuracy = serializers.FloatField()
    precision = serializers.FloatField()
    recall = serializers.FloatField()
    f1 = serializers.FloatField()
    confusion = serializers.JSONField()


class TrainingRunSerializer(serializers.Serializer):
    id = serializers.IntegerField()
    name = serializers.CharField()
    preset = serializers.CharField()
    variant = serializers.CharField()
    modality = serializers.CharField()
    arch = serializers.CharField()
    seq_len = serializers.IntegerField()
    seed = serializers.IntegerField()
    lr = serializers.FloatField()
    epochs_run = serializers.IntegerField()
    best_epoch = serializers.IntegerField()
    config_digest = serializers.CharField()
    checkpoint_path = serializers.CharField()
    created_at = serializers.DateTimeField()
    evaluations = EvaluationRecordSerializer(many=True)

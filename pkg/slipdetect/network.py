"""
Slip detection network.

Per-frame encoders -> per-modality temporal networks -> (fused: channel concat
-> fusion temporal network) -> readout of the last step -> linear head to two
logits. Label 0 is "slip", label 1 is "stable".
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .encoders import (
    FEATURE_DIM,
    TACTILE_FRAME_SHAPE,
    TactileEncoder,
    VisualEncoder,
    VisualEncoderSpec,
    encode_sequence,
    tactile_manifest,
    visual_manifest,
)
from .exceptions import CheckpointError, ConfigError, InputValidationError
from .tensor import (
    ParameterSpec,
    Tensor,
    concat_channels,
    initialize_parameters,
    linear,
    mean_time,
    select_time,
)
from .temporal import (
    MsTcnConfig,
    even_split,
    layer_weights,
    mstcn_config,
    mstcn_forward,
    parameter_manifest as temporal_manifest,
    tcn_config,
)

logger = logging.getLogger(__name__)

MODALITIES = ("tactile_only", "visual_only", "fused")
ARCHITECTURES = ("mstcn", "tcn")
READOUTS = ("last", "mean")
LABEL_NAMES = {0: "slip", 1: "stable"}
NUM_CLASSES = 2


def modality_mstcn(arch: str = "mstcn") -> MsTcnConfig:
    """Temporal network applied to one modality's 64-channel feature sequence."""
    if arch == "tcn":
        return tcn_config(FEATURE_DIM, FEATURE_DIM, layers=2, kernel_size=5, dilations=(1, 2))
    return mstcn_config(FEATURE_DIM, FEATURE_DIM, layers=2, branches=2, kernel_size=5)


def fusion_mstcn(arch: str = "mstcn") -> MsTcnConfig:
    """Temporal network over the concatenated 128-channel tactile+visual sequence."""
    if arch == "tcn":
        return tcn_config(2 * FEATURE_DIM, FEATURE_DIM, layers=3, kernel_size=3, dilations=(1, 2, 4))
    # 64 output channels over 3 branches: 22/21/21
    return mstcn_config(
        2 * FEATURE_DIM,
        FEATURE_DIM,
        layers=3,
        branches=3,
        kernel_size=3,
        branch_channels=even_split(FEATURE_DIM, 3),
    )


@dataclass(frozen=True)
class SlipModelConfig:
    modality: str = "fused"
    seq_len: int = 13
    visual: VisualEncoderSpec = field(default_factory=VisualEncoderSpec)
    visual_frozen: bool = False
    tactile_mstcn: MsTcnConfig = field(default_factory=modality_mstcn)
    visual_mstcn: MsTcnConfig = field(default_factory=modality_mstcn)
    fusion_mstcn: MsTcnConfig = field(default_factory=fusion_mstcn)
    readout: str = "last"
    arch: str = "mstcn"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigError(
                f"unknown modality {self.modality!r}; expected one of {', '.join(MODALITIES)}"
            )
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}; expected one of {', '.join(READOUTS)}")
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {', '.join(ARCHITECTURES)}")
        if self.seq_len < 1:
            raise ConfigError(f"sequence length must be >= 1, got {self.seq_len}")
        for label, cfg in (("tactile", self.tactile_mstcn), ("visual", self.visual_mstcn)):
            if cfg.in_channels != FEATURE_DIM or cfg.out_channels != FEATURE_DIM:
                raise ConfigError(
                    f"{label} temporal network must map {FEATURE_DIM} -> {FEATURE_DIM} channels"
                )
        if self.modality == "fused":
            expected = self.tactile_mstcn.out_channels + self.visual_mstcn.out_channels
            if self.fusion_mstcn.in_channels != expected:
                raise ConfigError(
                    f"fusion network expects {self.fusion_mstcn.in_channels} channels, "
                    f"modality networks provide {expected}"
                )
            if self.fusion_mstcn.out_channels != FEATURE_DIM:
                raise ConfigError(f"fusion network must emit {FEATURE_DIM} channels")

    @property
    def uses_tactile(self) -> bool:
        return self.modality in ("tactile_only", "fused")

    @property
    def uses_visual(self) -> bool:
        return self.modality in ("visual_only", "fused")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "modality": self.modality,
            "seq_len": self.seq_len,
            "visual": self.visual.to_dict(),
            "visual_frozen": self.visual_frozen,
            "tactile_mstcn": self.tactile_mstcn.to_dict(),
            "visual_mstcn": self.visual_mstcn.to_dict(),
            "fusion_mstcn": self.fusion_mstcn.to_dict(),
            "readout": self.readout,
            "arch": self.arch,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SlipModelConfig":
        try:
            return cls(
                modality=str(data["modality"]),
                seq_len=int(data["seq_len"]),
                visual=VisualEncoderSpec.from_dict(data["visual"]),
                visual_frozen=bool(data.get("visual_frozen", False)),
                tactile_mstcn=MsTcnConfig.from_dict(data["tactile_mstcn"]),
                visual_mstcn=MsTcnConfig.from_dict(data["visual_mstcn"]),
                fusion_mstcn=MsTcnConfig.from_dict(data["fusion_mstcn"]),
                readout=str(data.get("readout", "last")),
                arch=str(data.get("arch", "mstcn")),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model config: missing or invalid {exc}") from exc

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def build_model_config(
    modality: str = "fused",
    arch: str = "mstcn",
    seq_len: int = 13,
    visual: Optional[VisualEncoderSpec] = None,
    visual_frozen: bool = False,
    readout: str = "last",
) -> SlipModelConfig:
    """Default layer stacks for the given modality and temporal architecture."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {', '.join(ARCHITECTURES)}")
    return SlipModelConfig(
        modality=modality,
        seq_len=seq_len,
        visual=visual or VisualEncoderSpec(),
        visual_frozen=visual_frozen,
        tactile_mstcn=modality_mstcn(arch),
        visual_mstcn=modality_mstcn(arch),
        fusion_mstcn=fusion_mstcn(arch),
        readout=readout,
        arch=arch,
    )


def parameter_manifest(cfg: SlipModelConfig) -> List[ParameterSpec]:
    """Every parameter the config implies, in canonical (init and checkpoint) order."""
    manifest: List[ParameterSpec] = []
    if cfg.uses_tactile:
        manifest += tactile_manifest("tactile.encoder")
        manifest += temporal_manifest(cfg.tactile_mstcn, "tactile.mstcn")
    if cfg.uses_visual:
        manifest += visual_manifest(cfg.visual, cfg.visual_frozen, "visual.encoder")
        manifest += temporal_manifest(cfg.visual_mstcn, "visual.mstcn")
    if cfg.modality == "fused":
        manifest += temporal_manifest(cfg.fusion_mstcn, "fusion.mstcn")
    manifest += [
        ParameterSpec("head.weight", (NUM_CLASSES, FEATURE_DIM), True, FEATURE_DIM),
        ParameterSpec("head.bias", (NUM_CLASSES,), True, FEATURE_DIM),
    ]
    return manifest


@dataclass
class WindowBatch:
    """
    Model input: B windows of T frames.

    tactile: (B, T, 3, 4, 4); visual: (B, T, E) or (B, T, 3, 32, 32); labels: (B,).
    """

    tactile: Optional[np.ndarray] = None
    visual: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        for array in (self.tactile, self.visual, self.labels):
            if array is not None:
                return int(array.shape[0])
        return 0

    @property
    def seq_len(self) -> Optional[int]:
        for array in (self.tactile, self.visual):
            if array is not None:
                return int(array.shape[1])
        return None

    @classmethod
    def from_windows(cls, windows: Sequence[Any]) -> "WindowBatch":
        """Stack sample windows (anything with x_t, x_v and y) into one batch."""
        if not windows:
            raise InputValidationError("cannot build a batch from zero windows")
        tactile = visual = None
        if all(w.x_t is not None for w in windows):
            tactile = np.stack([np.asarray(w.x_t, dtype=np.float64) for w in windows])
        if all(w.x_v is not None for w in windows):
            visual = np.stack([np.asarray(w.x_v, dtype=np.float64) for w in windows])
        labels = np.array([int(w.y) for w in windows], dtype=np.int64)
        return cls(tactile=tactile, visual=visual, labels=labels)


@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    label: int
    confidence: float

    @property
    def label_name(self) -> str:
        return LABEL_NAMES[self.label]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "label_name": self.label_name,
            "confidence": self.confidence,
            "logits": [float(v) for v in self.logits],
        }


def prediction_from_logits(logits: np.ndarray) -> Prediction:
    """argmax label (ties go to label 0) and its softmax probability."""
    values = np.asarray(logits, dtype=np.float64).reshape(-1)
    label = int(np.argmax(values))
    shifted = np.exp(values - values.max())
    probs = shifted / shifted.sum()
    return Prediction(logits=values.copy(), label=label, confidence=float(probs[label]))


class SlipDetector:
    """A model config plus its named parameters."""

    def __init__(self, cfg: SlipModelConfig, params: Mapping[str, Tensor]):
        manifest = parameter_manifest(cfg)
        missing = [spec.name for spec in manifest if spec.name not in params]
        if missing:
            raise ConfigError(f"missing parameters: {', '.join(missing)}")
        self.cfg = cfg
        # the model owns copies; the caller's tensors keep their own flags and data
        self.params: Dict[str, Tensor] = {}
        for spec in manifest:
            tensor = params[spec.name]
            if tensor.shape != spec.shape:
                raise ConfigError(
                    f"parameter {spec.name} has shape {tensor.shape}, expected {spec.shape}"
                )
            self.params[spec.name] = Tensor(tensor.data, requires_grad=spec.trainable, name=spec.name)

        self.tactile_encoder = TactileEncoder(self.params) if cfg.uses_tactile else None
        self.visual_encoder = VisualEncoder(cfg.visual, self.params) if cfg.uses_visual else None
        self.tactile_weights = layer_weights(cfg.tactile_mstcn, self.params, "tactile.mstcn") if cfg.uses_tactile else None
        self.visual_weights = layer_weights(cfg.visual_mstcn, self.params, "visual.mstcn") if cfg.uses_visual else None
        self.fusion_weights = (
            layer_weights(cfg.fusion_mstcn, self.params, "fusion.mstcn")
            if cfg.modality == "fused"
            else None
        )

    @classmethod
    def initialize(cls, cfg: SlipModelConfig, seed: int = 0) -> "SlipDetector":
        rng = np.random.default_rng(seed)
        return cls(cfg, initialize_parameters(parameter_manifest(cfg), rng))

    @classmethod
    def from_arrays(cls, cfg: SlipModelConfig, arrays: Mapping[str, np.ndarray]) -> "SlipDetector":
        manifest = parameter_manifest(cfg)
        expected = [spec.name for spec in manifest]
        if list(arrays) != expected:
            raise CheckpointError(
                "parameter names do not match the model config",
                expected=expected,
                actual=list(arrays),
            )
        return cls(cfg, {name: Tensor(value) for name, value in arrays.items()})

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {name: p for name, p in self.params.items() if p.requires_grad}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            p.data[...] = arrays[name]

    def _validate(self, batch: WindowBatch) -> None:
        needed = []
        if self.cfg.uses_tactile and batch.tactile is None:
            needed.append("tactile")
        if self.cfg.uses_visual and batch.visual is None:
            needed.append("visual")
        if needed:
            raise InputValidationError(
                f"{self.cfg.modality} model needs {' and '.join(needed)} frames", modality=self.cfg.modality
            )
        for label, array, frame_shape in (
            ("tactile", batch.tactile if self.cfg.uses_tactile else None, TACTILE_FRAME_SHAPE),
            ("visual", batch.visual if self.cfg.uses_visual else None, self.cfg.visual.frame_shape),
        ):
            if array is None:
                continue
            if array.ndim != 2 + len(frame_shape) or tuple(array.shape[2:]) != tuple(frame_shape):
                raise InputValidationError(
                    f"{label} batch has shape {tuple(array.shape)}, expected (B, T) + {tuple(frame_shape)}",
                )
            if array.shape[1] != self.cfg.seq_len:
                raise InputValidationError(
                    f"{label} windows have {array.shape[1]} frames, model expects {self.cfg.seq_len}",
                    seq_len=self.cfg.seq_len,
                )
        if self.cfg.modality == "fused" and batch.tactile.shape[0] != batch.visual.shape[0]:
            raise InputValidationError("tactile and visual batches differ in size")

    def features(self, batch: WindowBatch) -> Dict[str, Tensor]:
        """Intermediate tensors of one forward pass, keyed by stage."""
        self._validate(batch)
        stages: Dict[str, Tensor] = {}
        if self.cfg.uses_tactile:
            stages["tactile_spatial"] = encode_sequence(batch.tactile, self.tactile_encoder)
            stages["tactile_temporal"] = mstcn_forward(
                stages["tactile_spatial"], self.cfg.tactile_mstcn, self.tactile_weights
            )
            sequence = stages["tactile_temporal"]
        if self.cfg.uses_visual:
            stages["visual_spatial"] = encode_sequence(batch.visual, self.visual_encoder)
            stages["visual_temporal"] = mstcn_forward(
                stages["visual_spatial"], self.cfg.visual_mstcn, self.visual_weights
            )
            sequence = stages["visual_temporal"]
        if self.cfg.modality == "fused":
            stages["fusion_input"] = concat_channels(stages["tactile_temporal"], stages["visual_temporal"])
            stages["fusion_output"] = mstcn_forward(
                stages["fusion_input"], self.cfg.fusion_mstcn, self.fusion_weights
            )
            sequence = stages["fusion_output"]
        stages["readout"] = select_time(sequence, -1) if self.cfg.readout == "last" else mean_time(sequence)
        return stages

    def forward(self, batch: WindowBatch) -> Tensor:
        """(B, 2) logits."""
        readout = self.features(batch)["readout"]
        return linear(readout, self.params["head.weight"], self.params["head.bias"])

    def predict(self, batch: WindowBatch) -> List[Prediction]:
        logits = self.forward(batch).data
        return [prediction_from_logits(row) for row in logits]


def forward(batch: WindowBatch, cfg: SlipModelConfig, params: Mapping[str, Tensor]) -> Tensor:
    """Logits for ``batch``; gradients of a backward pass land on the model's copies, not on ``params``."""
    return SlipDetector(cfg, params).forward(batch)


def predict(window: WindowBatch, cfg: SlipModelConfig, params: Mapping[str, Tensor]) -> Prediction:
    """Single-window prediction; ``window`` holds a batch of one."""
    if window.size != 1:
        raise InputValidationError(f"predict takes one window, got {window.size}")
    return SlipDetector(cfg, params).predict(window)[0]

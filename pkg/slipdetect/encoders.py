"""
Per-frame spatial encoders.

Tactile frames are 3x4x4 images (one channel per force axis); visual frames are
either precomputed embeddings or small RGB images. Both encoders map a frame to
a 64-d feature; encode_sequence applies them frame by frame to build a
64 x T feature sequence.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, MutableMapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError, DimensionError, InputValidationError
from .tensor import (
    ParameterSpec,
    Tensor,
    as_tensor,
    conv2d,
    linear,
    maxpool2d,
    relu,
    reshape,
    transpose,
)

logger = logging.getLogger(__name__)

FEATURE_DIM = 64
TACTILE_FRAME_SHAPE = (3, 4, 4)
VISUAL_IMAGE_SHAPE = (3, 32, 32)
VISUAL_MODES = ("embedding_passthrough", "small_cnn")

# name, (C_out, C_in, kh, kw), padding, followed by 2x2 max pooling
TACTILE_CONVS: Tuple[Tuple[str, Tuple[int, int, int, int], int, bool], ...] = (
    ("conv1", (8, 3, 3, 3), 1, True),
    ("conv2", (16, 8, 3, 3), 1, True),
    ("conv3", (32, 16, 1, 1), 0, False),
)
VISUAL_CONVS: Tuple[Tuple[str, Tuple[int, int, int, int], int, bool], ...] = (
    ("conv1", (8, 3, 3, 3), 1, True),
    ("conv2", (16, 8, 3, 3), 1, True),
    ("conv3", (32, 16, 3, 3), 1, True),
)
TACTILE_FLAT_DIM = 32
VISUAL_FLAT_DIM = 32 * 4 * 4

FrameArray = Union[np.ndarray, Tensor]


def _conv_manifest(
    prefix: str, convs, trainable: bool
) -> List[ParameterSpec]:
    manifest = []
    for name, shape, _, _ in convs:
        fan_in = shape[1] * shape[2] * shape[3]
        manifest.append(ParameterSpec(f"{prefix}.{name}.weight", shape, trainable, fan_in))
        manifest.append(ParameterSpec(f"{prefix}.{name}.bias", (shape[0],), trainable, fan_in))
    return manifest


def _proj_manifest(prefix: str, in_dim: int) -> List[ParameterSpec]:
    return [
        ParameterSpec(f"{prefix}.proj.weight", (FEATURE_DIM, in_dim), True, in_dim),
        ParameterSpec(f"{prefix}.proj.bias", (FEATURE_DIM,), True, in_dim),
    ]


def _run_convs(
    x: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    convs,
    op: str,
    trace: Optional[MutableMapping[str, Tuple[int, ...]]],
) -> Tensor:
    for name, _, padding, pooled in convs:
        stage = f"{op}.{name}"
        try:
            x = relu(conv2d(x, params[f"{prefix}.{name}.weight"], params[f"{prefix}.{name}.bias"], padding=padding))
            if trace is not None:
                trace[name] = x.shape[-3:]
            if pooled:
                x = maxpool2d(x, 2, 2)
                if trace is not None:
                    trace[f"{name}.pool"] = x.shape[-3:]
        except DimensionError as exc:
            raise DimensionError(stage, exc.expected, exc.actual, detail=exc.op) from exc
    return x


def tactile_manifest(prefix: str = "tactile.encoder") -> List[ParameterSpec]:
    return _conv_manifest(prefix, TACTILE_CONVS, True) + _proj_manifest(prefix, TACTILE_FLAT_DIM)


def tactile_encode(
    frames: FrameArray,
    params: Mapping[str, Tensor],
    prefix: str = "tactile.encoder",
    trace: Optional[MutableMapping[str, Tuple[int, ...]]] = None,
) -> Tensor:
    """
    3x4x4 tactile frame(s) -> 64-d feature(s).

    conv 3x3 (8) -> pool -> conv 3x3 (16) -> pool -> conv 1x1 (32) -> linear (64).
    The third pooling stage of a deeper image stack would see a 1x1 map, so it
    is left out. Accepts (3, 4, 4) or (N, 3, 4, 4).
    """
    x = as_tensor(frames)
    if x.shape[-3:] != TACTILE_FRAME_SHAPE or x.ndim not in (3, 4):
        raise DimensionError("tactile_encode.input", f"frame of shape {TACTILE_FRAME_SHAPE}", x.shape)
    single = x.ndim == 3
    x = _run_convs(x, params, prefix, TACTILE_CONVS, "tactile_encode", trace)
    flat = reshape(x, (TACTILE_FLAT_DIM,) if single else (x.shape[0], TACTILE_FLAT_DIM))
    return linear(flat, params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"])


@dataclass(frozen=True)
class VisualEncoderSpec:
    """How visual frames become features: precomputed embeddings or a small CNN on 32x32 RGB."""

    mode: str = "embedding_passthrough"
    embed_dim: int = 512

    def __post_init__(self):
        if self.mode not in VISUAL_MODES:
            raise ConfigError(
                f"unknown visual encoder mode {self.mode!r}; expected one of {', '.join(VISUAL_MODES)}"
            )
        if self.mode == "embedding_passthrough" and self.embed_dim < 1:
            raise ConfigError(f"embedding dimension must be >= 1, got {self.embed_dim}")

    @property
    def frame_shape(self) -> Tuple[int, ...]:
        if self.mode == "small_cnn":
            return VISUAL_IMAGE_SHAPE
        return (self.embed_dim,)

    @property
    def feature_dim(self) -> int:
        return VISUAL_FLAT_DIM if self.mode == "small_cnn" else self.embed_dim

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode, "embed_dim": self.embed_dim}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VisualEncoderSpec":
        return cls(mode=str(data.get("mode", "embedding_passthrough")), embed_dim=int(data.get("embed_dim", 512)))


def visual_manifest(
    spec: VisualEncoderSpec, frozen: bool = False, prefix: str = "visual.encoder"
) -> List[ParameterSpec]:
    """Backbone convs (small_cnn only, frozen on request) followed by the trainable projection."""
    manifest = []
    if spec.mode == "small_cnn":
        manifest.extend(_conv_manifest(prefix, VISUAL_CONVS, not frozen))
    return manifest + _proj_manifest(prefix, spec.feature_dim)


def normalize_image(image: np.ndarray) -> np.ndarray:
    """uint8 RGB in [0, 255] -> float64 in [0, 1]; float input is passed through."""
    array = np.asarray(image)
    if array.dtype == np.uint8:
        return array.astype(np.float64) / 255.0
    return array.astype(np.float64)


def visual_encode(
    frames: FrameArray,
    spec: VisualEncoderSpec,
    params: Mapping[str, Tensor],
    prefix: str = "visual.encoder",
) -> Tensor:
    """Visual frame(s) -> 64-d feature(s); accepts one frame or a leading batch axis."""
    x = as_tensor(frames)
    shape = spec.frame_shape
    rank = len(shape)
    if x.shape[-rank:] != shape or x.ndim not in (rank, rank + 1):
        raise InputValidationError(
            f"visual frame of shape {tuple(x.shape)} does not match {spec.mode} input {shape}",
            mode=spec.mode,
            expected=list(shape),
            actual=list(x.shape),
        )
    single = x.ndim == rank
    if spec.mode == "small_cnn":
        x = _run_convs(x, params, prefix, VISUAL_CONVS, "visual_encode", None)
        x = reshape(x, (VISUAL_FLAT_DIM,) if single else (x.shape[0], VISUAL_FLAT_DIM))
    return linear(x, params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"])


class TactileEncoder:
    frame_shape = TACTILE_FRAME_SHAPE

    def __init__(self, params: Mapping[str, Tensor], prefix: str = "tactile.encoder"):
        self.params = params
        self.prefix = prefix

    def __call__(self, frames: FrameArray) -> Tensor:
        return tactile_encode(frames, self.params, self.prefix)


class VisualEncoder:
    def __init__(self, spec: VisualEncoderSpec, params: Mapping[str, Tensor], prefix: str = "visual.encoder"):
        self.spec = spec
        self.params = params
        self.prefix = prefix

    @property
    def frame_shape(self) -> Tuple[int, ...]:
        return self.spec.frame_shape

    def __call__(self, frames: FrameArray) -> Tensor:
        return visual_encode(frames, self.spec, self.params, self.prefix)


def _stack_frames(frames: Union[FrameArray, Sequence[np.ndarray]], frame_shape: Tuple[int, ...]) -> np.ndarray:
    if isinstance(frames, Tensor):
        return frames.data
    if isinstance(frames, np.ndarray):
        return frames
    for index, frame in enumerate(frames):
        if np.shape(frame) != frame_shape:
            raise DimensionError(
                "encode_sequence", f"frame of shape {frame_shape}", np.shape(frame), detail=f"frame={index}"
            )
    return np.stack([np.asarray(frame, dtype=np.float64) for frame in frames])


def encode_sequence(frames: Union[FrameArray, Sequence[np.ndarray]], encoder) -> Tensor:
    """
    Encode every frame of a (T, ...) or (B, T, ...) sequence.

    Returns (64, T) or (B, 64, T): column t is the encoding of frame t.
    """
    frame_shape = tuple(encoder.frame_shape)
    array = _stack_frames(frames, frame_shape)
    rank = len(frame_shape)
    if array.ndim not in (rank + 1, rank + 2) or array.shape[-rank:] != frame_shape:
        raise DimensionError("encode_sequence", f"frames of shape {frame_shape}", array.shape)
    batched = array.ndim == rank + 2
    lead = array.shape[: array.ndim - rank]
    if 0 in lead:
        raise DimensionError("encode_sequence", "at least one frame", array.shape)

    flat = array.reshape((-1,) + frame_shape)
    if isinstance(frames, Tensor) and frames.requires_grad:
        flat = reshape(frames, (-1,) + frame_shape)
    try:
        features = encoder(flat)
    except DimensionError as exc:
        raise DimensionError("encode_sequence", exc.expected, exc.actual, detail=exc.op) from exc
    if batched:
        batch, length = lead
        return transpose(reshape(features, (batch, length, FEATURE_DIM)), (0, 2, 1))
    return transpose(features, (1, 0))

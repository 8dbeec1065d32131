"""
Temporal networks: plain TCN and multi-scale TCN (parallel dilated branches).

A TCN is the single-branch special case of an MS-TCN, so both share one
layer implementation. Parameters are named
``<prefix>.layer{i}.branch{j}.weight|bias``.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError
from .tensor import (
    ParameterSpec,
    Tensor,
    add,
    as_tensor,
    concat_channels,
    conv1d_causal,
    initialize_parameters,
    relu,
)

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "none")

BranchWeights = Tuple[Tensor, Tensor]
LayerWeights = Sequence[BranchWeights]


def even_split(channels: int, branches: int) -> Tuple[int, ...]:
    """Split ``channels`` over ``branches`` as evenly as possible, larger shares first."""
    if channels < 1 or branches < 1 or branches > channels:
        raise ConfigError(f"cannot split {channels} channels over {branches} branches")
    base, extra = divmod(channels, branches)
    return tuple(base + 1 if j < extra else base for j in range(branches))


def branch_dilations(branches: int) -> Tuple[int, ...]:
    return tuple(2**j for j in range(branches))


@dataclass(frozen=True)
class MsTcnLayerConfig:
    in_channels: int
    out_channels: int
    branches: int = 1
    kernel_size: int = 3
    dilations: Tuple[int, ...] = (1,)
    kernel_sizes: Optional[Tuple[int, ...]] = None
    branch_channels: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.kernel_sizes is not None:
            object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        if self.branch_channels is not None:
            object.__setattr__(self, "branch_channels", tuple(int(c) for c in self.branch_channels))

        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(
                f"channel counts must be >= 1, got in={self.in_channels} out={self.out_channels}"
            )
        if self.branches < 1:
            raise ConfigError(f"branch count must be >= 1, got {self.branches}")
        if self.kernel_size < 1:
            raise ConfigError(f"kernel size must be >= 1, got {self.kernel_size}")
        if len(self.dilations) != self.branches:
            raise ConfigError(
                f"expected {self.branches} dilations, got {len(self.dilations)}",
                dilations=list(self.dilations),
            )
        if any(d < 1 for d in self.dilations):
            raise ConfigError("dilations must be >= 1", dilations=list(self.dilations))
        if self.kernel_sizes is not None:
            if len(self.kernel_sizes) != self.branches or any(k < 1 for k in self.kernel_sizes):
                raise ConfigError(
                    f"expected {self.branches} kernel sizes >= 1",
                    kernel_sizes=list(self.kernel_sizes),
                )
        if self.branch_channels is None:
            if self.out_channels % self.branches:
                raise ConfigError(
                    f"{self.out_channels} output channels are not divisible by "
                    f"{self.branches} branches; pass branch_channels explicitly",
                    out_channels=self.out_channels,
                    branches=self.branches,
                )
        elif (
            len(self.branch_channels) != self.branches
            or any(c < 1 for c in self.branch_channels)
            or sum(self.branch_channels) != self.out_channels
        ):
            raise ConfigError(
                f"branch channels must be {self.branches} positive counts summing to {self.out_channels}",
                branch_channels=list(self.branch_channels),
            )

    @property
    def channel_split(self) -> Tuple[int, ...]:
        if self.branch_channels is not None:
            return self.branch_channels
        share = self.out_channels // self.branches
        return (share,) * self.branches

    @property
    def branch_kernels(self) -> Tuple[int, ...]:
        if self.kernel_sizes is not None:
            return self.kernel_sizes
        return (self.kernel_size,) * self.branches

    @property
    def span(self) -> int:
        """Extra past frames this layer can see: max over branches of (k - 1) * d."""
        return max((k - 1) * d for k, d in zip(self.branch_kernels, self.dilations))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "branches": self.branches,
            "kernel_size": self.kernel_size,
            "dilations": list(self.dilations),
            "kernel_sizes": list(self.kernel_sizes) if self.kernel_sizes is not None else None,
            "branch_channels": (
                list(self.branch_channels) if self.branch_channels is not None else None
            ),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MsTcnLayerConfig":
        try:
            return cls(
                in_channels=int(data["in_channels"]),
                out_channels=int(data["out_channels"]),
                branches=int(data.get("branches", 1)),
                kernel_size=int(data.get("kernel_size", 3)),
                dilations=tuple(data.get("dilations", (1,))),
                kernel_sizes=(
                    tuple(data["kernel_sizes"]) if data.get("kernel_sizes") is not None else None
                ),
                branch_channels=(
                    tuple(data["branch_channels"])
                    if data.get("branch_channels") is not None
                    else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed temporal layer config: {exc}") from exc


@dataclass(frozen=True)
class MsTcnConfig:
    layers: Tuple[MsTcnLayerConfig, ...] = field(default_factory=tuple)
    activation: str = "relu"
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("a temporal network needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; expected one of {', '.join(ACTIVATIONS)}"
            )
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.out_channels != nxt.in_channels:
                raise ConfigError(
                    f"layer {i} emits {prev.out_channels} channels but layer {i + 1} "
                    f"expects {nxt.in_channels}"
                )

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def is_single_branch(self) -> bool:
        return all(layer.branches == 1 for layer in self.layers)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "activation": self.activation,
            "residual": self.residual,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MsTcnConfig":
        try:
            layers = tuple(MsTcnLayerConfig.from_dict(layer) for layer in data["layers"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed temporal config: {exc}") from exc
        return cls(
            layers=layers,
            activation=str(data.get("activation", "relu")),
            residual=bool(data.get("residual", False)),
        )


def mstcn_config(
    in_channels: int,
    out_channels: int = 64,
    layers: int = 2,
    branches: int = 2,
    kernel_size: int = 5,
    activation: str = "relu",
    residual: bool = False,
    branch_channels: Optional[Sequence[int]] = None,
) -> MsTcnConfig:
    """Stack of identical multi-branch layers with branch dilations 1, 2, 4, ..."""
    if layers < 1:
        raise ConfigError(f"layer count must be >= 1, got {layers}")
    dilations = branch_dilations(branches)
    split = tuple(branch_channels) if branch_channels is not None else None
    stack = []
    channels = in_channels
    for _ in range(layers):
        stack.append(
            MsTcnLayerConfig(
                in_channels=channels,
                out_channels=out_channels,
                branches=branches,
                kernel_size=kernel_size,
                dilations=dilations,
                branch_channels=split,
            )
        )
        channels = out_channels
    return MsTcnConfig(layers=tuple(stack), activation=activation, residual=residual)


def tcn_config(
    in_channels: int,
    out_channels: int = 64,
    layers: int = 4,
    kernel_size: int = 3,
    dilations: Optional[Sequence[int]] = None,
    activation: str = "relu",
    residual: bool = False,
) -> MsTcnConfig:
    """Single-branch stack; layer i uses dilation 2**i unless given."""
    if layers < 1:
        raise ConfigError(f"layer count must be >= 1, got {layers}")
    per_layer = tuple(dilations) if dilations is not None else tuple(2**i for i in range(layers))
    if len(per_layer) != layers:
        raise ConfigError(f"expected {layers} dilations, got {len(per_layer)}")
    stack = []
    channels = in_channels
    for d in per_layer:
        stack.append(
            MsTcnLayerConfig(
                in_channels=channels,
                out_channels=out_channels,
                branches=1,
                kernel_size=kernel_size,
                dilations=(d,),
            )
        )
        channels = out_channels
    return MsTcnConfig(layers=tuple(stack), activation=activation, residual=residual)


def receptive_field(cfg: MsTcnConfig) -> int:
    """Number of input frames that can influence one output frame."""
    return 1 + sum(layer.span for layer in cfg.layers)


def parameter_manifest(cfg: MsTcnConfig, prefix: str) -> List[ParameterSpec]:
    manifest = []
    for i, layer in enumerate(cfg.layers):
        for j, (channels, k) in enumerate(zip(layer.channel_split, layer.branch_kernels)):
            fan_in = layer.in_channels * k
            base = f"{prefix}.layer{i}.branch{j}"
            manifest.append(
                ParameterSpec(f"{base}.weight", (channels, layer.in_channels, k), True, fan_in)
            )
            manifest.append(ParameterSpec(f"{base}.bias", (channels,), True, fan_in))
    return manifest


def _activate(x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return relu(x)
    return x


def mstcn_layer_forward(
    x: Tensor,
    layer: MsTcnLayerConfig,
    weights: LayerWeights,
    activation: str = "relu",
    residual: bool = False,
) -> Tensor:
    """
    Run every branch on the same input, concatenate along channels in branch
    order, add the input when residual and shapes allow, then activate.
    """
    x = as_tensor(x)
    if len(weights) != layer.branches:
        raise DimensionError("mstcn_layer", f"{layer.branches} branch weight pairs", len(weights))
    if x.ndim not in (2, 3) or x.shape[-2] != layer.in_channels:
        raise DimensionError("mstcn_layer", f"{layer.in_channels} input channels", x.shape)

    out: Optional[Tensor] = None
    for j, ((w, b), channels, k, d) in enumerate(
        zip(weights, layer.channel_split, layer.branch_kernels, layer.dilations)
    ):
        if w.shape != (channels, layer.in_channels, k) or b.shape != (channels,):
            raise DimensionError(
                f"mstcn_layer.branch{j}",
                f"weight {(channels, layer.in_channels, k)} and bias ({channels},)",
                (w.shape, b.shape),
            )
        branch = conv1d_causal(x, w, b, dilation=d)
        out = branch if out is None else concat_channels(out, branch)

    if residual and layer.in_channels == layer.out_channels:
        out = add(out, x)
    return _activate(out, activation)


def mstcn_forward(
    x: Tensor, cfg: MsTcnConfig, weights: Sequence[LayerWeights]
) -> Tensor:
    if len(weights) != len(cfg.layers):
        raise DimensionError("mstcn", f"{len(cfg.layers)} layers of weights", len(weights))
    x = as_tensor(x)
    if x.ndim not in (2, 3) or x.shape[-2] != cfg.in_channels:
        raise DimensionError("mstcn", f"{cfg.in_channels} input channels", x.shape)
    for layer, layer_weights in zip(cfg.layers, weights):
        x = mstcn_layer_forward(x, layer, layer_weights, cfg.activation, cfg.residual)
    return x


def tcn_forward(x: Tensor, cfg: MsTcnConfig, weights: Sequence[LayerWeights]) -> Tensor:
    if not cfg.is_single_branch:
        raise ConfigError("tcn_forward requires single-branch layers; use mstcn_forward")
    return mstcn_forward(x, cfg, weights)


def layer_weights(cfg: MsTcnConfig, params: Mapping[str, Tensor], prefix: str) -> List[List[BranchWeights]]:
    """Regroup a flat name -> tensor map into per-layer, per-branch (weight, bias) pairs."""
    grouped = []
    try:
        for i, layer in enumerate(cfg.layers):
            grouped.append(
                [
                    (
                        params[f"{prefix}.layer{i}.branch{j}.weight"],
                        params[f"{prefix}.layer{i}.branch{j}.bias"],
                    )
                    for j in range(layer.branches)
                ]
            )
    except KeyError as exc:
        raise ConfigError(f"missing temporal parameter {exc.args[0]}") from exc
    return grouped


class MsTcn:
    """Owns the parameters of one temporal network."""

    def __init__(
        self,
        cfg: MsTcnConfig,
        prefix: str,
        params: Optional[Mapping[str, Tensor]] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.cfg = cfg
        self.prefix = prefix
        if params is None:
            params = initialize_parameters(self.manifest(), rng or np.random.default_rng(0))
        self.params: Dict[str, Tensor] = dict(params)
        self.weights = layer_weights(cfg, self.params, prefix)

    def manifest(self) -> List[ParameterSpec]:
        return parameter_manifest(self.cfg, self.prefix)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.cfg)

    def __call__(self, x: Tensor) -> Tensor:
        return mstcn_forward(x, self.cfg, self.weights)

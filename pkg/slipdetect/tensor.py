"""
Tensor Core

Dense float64 tensors with reverse-mode automatic differentiation for the
operations the slip detection network is built from:

    - conv1d_causal: dilated causal 1D convolution (left zero padding)
    - conv2d / maxpool2d: spatial feature extraction on tactile/visual frames
    - linear, relu, concat_channels, softmax_cross_entropy
    - a handful of structural ops (add, mul, sum, reshape, transpose,
      select_time, mean_time) used to wire the model together

Ops accept an optional leading batch axis; single-sample semantics are the
contract, batching is a loop the ops do for us.

Gradients accumulate across backward() calls until zero_grad() is called.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigError, DimensionError, InputValidationError, UsageError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[Any], float, int]
Pair = Tuple[int, int]


class Tensor:
    """
    N-dimensional float64 array plus autodiff bookkeeping.

    Attributes:
        data: the values (NumPy C-order array)
        requires_grad: whether gradients are tracked for this tensor
        grad: accumulated gradient, same shape as data (None until backward)
        creator: the Function that produced this tensor, if any
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        creator: Optional["Function"] = None,
        copy: bool = True,
    ):
        if copy:
            array = np.array(data, dtype=np.float64)
        else:
            array = np.ascontiguousarray(data, dtype=np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.creator = creator
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(
                "item() requires a single-element tensor", shape=list(self.shape)
            )
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap arrays as constant tensors; tensors pass through untouched."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, copy=False)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement forward() on NumPy arrays and backward(), which maps
    the gradient of the output to one gradient (or None) per input tensor.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(
            out,
            requires_grad=requires_grad,
            creator=fn if requires_grad else None,
            copy=False,
        )


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order over the graph: every input precedes the tensors built from it."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Reverse-mode accumulation from a scalar loss.

    Every requires_grad tensor reachable from ``loss`` gets its gradient added
    to ``.grad``; calling twice without zero_grad() accumulates twice.
    """
    if loss.size != 1:
        raise UsageError(
            "backward() requires a scalar loss", shape=list(loss.shape)
        )
    if not loss.requires_grad:
        return

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        node._accumulate(grad)
        if node.creator is None:
            continue
        for parent, parent_grad in zip(node.creator.inputs, node.creator.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad


# --- parameters -------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSpec:
    """One entry of a parameter manifest."""

    name: str
    shape: Tuple[int, ...]
    trainable: bool = True
    fan_in: int = 1


def initialize_parameters(
    manifest: Iterable[ParameterSpec], rng: np.random.Generator
) -> Dict[str, Tensor]:
    """Uniform fan-in initialisation, U(-sqrt(1/fan_in), +sqrt(1/fan_in)), in manifest order."""
    params: Dict[str, Tensor] = {}
    for spec in manifest:
        bound = float(np.sqrt(1.0 / spec.fan_in))
        values = rng.uniform(-bound, bound, size=spec.shape)
        params[spec.name] = Tensor(
            values, requires_grad=spec.trainable, name=spec.name, copy=False
        )
    return params


# --- differentiable operations ----------------------------------------------


class Conv1dCausal(Function):
    def forward(self, x, w, b, dilation: int = 1):
        self.batched = x.ndim == 3
        xb = x if self.batched else x[None]
        length = xb.shape[2]
        taps = w.shape[2]
        self.pad = (taps - 1) * dilation
        self.dilation = dilation
        self.length = length
        self.w = w
        self.xp = np.pad(xb, ((0, 0), (0, 0), (self.pad, 0)))

        y = np.empty((xb.shape[0], w.shape[0], length))
        y[...] = b[None, :, None]
        for i in range(taps):
            start = self.pad - i * dilation
            y += np.matmul(w[:, :, i], self.xp[:, :, start : start + length])
        return y if self.batched else y[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        dxp = np.zeros_like(self.xp)
        dw = np.empty_like(self.w)
        for i in range(self.w.shape[2]):
            start = self.pad - i * self.dilation
            window = self.xp[:, :, start : start + self.length]
            dw[:, :, i] = np.tensordot(g, window, axes=([0, 2], [0, 2]))
            dxp[:, :, start : start + self.length] += np.matmul(self.w[:, :, i].T, g)
        dx = dxp[:, :, self.pad :]
        db = g.sum(axis=(0, 2))
        return (dx if self.batched else dx[0]), dw, db


class Conv2d(Function):
    def forward(self, x, w, b, stride: Pair = (1, 1), padding: Pair = (0, 0)):
        self.batched = x.ndim == 4
        xb = x if self.batched else x[None]
        self.in_shape = xb.shape
        self.stride = stride
        self.padding = padding
        self.w = w
        ph, pw = padding
        sh, sw = stride
        kh, kw = w.shape[2], w.shape[3]
        xp = np.pad(xb, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        self.xp_shape = xp.shape
        # (B, C, H', W', kh, kw)
        self.windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        y = np.tensordot(self.windows, w, axes=([1, 4, 5], [1, 2, 3]))
        y = y.transpose(0, 3, 1, 2) + b[None, :, None, None]
        y = np.ascontiguousarray(y)
        return y if self.batched else y[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        sh, sw = self.stride
        ph, pw = self.padding
        kh, kw = self.w.shape[2], self.w.shape[3]
        out_h, out_w = g.shape[2], g.shape[3]

        dw = np.tensordot(g, self.windows, axes=([0, 2, 3], [0, 2, 3]))
        db = g.sum(axis=(0, 2, 3))
        # (B, H', W', C, kh, kw)
        dcols = np.tensordot(g, self.w, axes=([1], [0]))
        dxp = np.zeros(self.xp_shape)
        for i in range(kh):
            for j in range(kw):
                dxp[
                    :,
                    :,
                    i : i + sh * (out_h - 1) + 1 : sh,
                    j : j + sw * (out_w - 1) + 1 : sw,
                ] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        height, width = self.in_shape[2], self.in_shape[3]
        dx = dxp[:, :, ph : ph + height, pw : pw + width]
        return (dx if self.batched else dx[0]), dw, db


class MaxPool2d(Function):
    def forward(self, x, size: Pair = (2, 2), stride: Pair = (2, 2)):
        self.batched = x.ndim == 4
        xb = x if self.batched else x[None]
        self.in_shape = xb.shape
        kh, kw = size
        sh, sw = stride
        windows = sliding_window_view(xb, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        flat = windows.reshape(windows.shape[:4] + (kh * kw,))
        # argmax picks the first (row-major) maximum on ties
        arg = flat.argmax(axis=-1)
        out_h, out_w = arg.shape[2], arg.shape[3]
        self.rows = np.arange(out_h)[:, None] * sh + arg // kw
        self.cols = np.arange(out_w)[None, :] * sw + arg % kw
        y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return y if self.batched else y[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        batch, channels = self.in_shape[0], self.in_shape[1]
        bi = np.arange(batch)[:, None, None, None]
        ci = np.arange(channels)[None, :, None, None]
        dx = np.zeros(self.in_shape)
        np.add.at(dx, (bi, ci, self.rows, self.cols), g)
        return (dx if self.batched else dx[0]),


class Linear(Function):
    def forward(self, x, w, b):
        self.x = x
        self.w = w
        return x @ w.T + b

    def backward(self, grad):
        d_in = self.w.shape[1]
        g2 = grad.reshape(-1, self.w.shape[0])
        x2 = self.x.reshape(-1, d_in)
        return grad @ self.w, g2.T @ x2, g2.sum(axis=0)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class ConcatChannels(Function):
    def forward(self, a, b):
        self.split = a.shape[-2]
        return np.concatenate([a, b], axis=-2)

    def backward(self, grad):
        return grad[..., : self.split, :], grad[..., self.split :, :]


class SoftmaxCrossEntropy(Function):
    def forward(self, logits, labels: np.ndarray = None):
        n = logits.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        self.probs = np.exp(log_probs)
        self.labels = labels
        return np.array(-log_probs[np.arange(n), labels].mean())

    def backward(self, grad):
        n = self.probs.shape[0]
        d = self.probs.copy()
        d[np.arange(n), self.labels] -= 1.0
        return (d * (float(grad) / n),)


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Sum(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.array(x.sum())

    def backward(self, grad):
        return (np.full(self.shape, float(grad)),)


class Reshape(Function):
    def forward(self, x, shape: Tuple[int, ...] = ()):
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x, axes: Tuple[int, ...] = ()):
        self.axes = axes
        return np.ascontiguousarray(x.transpose(axes))

    def backward(self, grad):
        return (grad.transpose(np.argsort(self.axes)),)


class SelectTime(Function):
    def forward(self, x, index: int = -1):
        self.shape = x.shape
        self.index = index
        return x[..., index].copy()

    def backward(self, grad):
        dx = np.zeros(self.shape)
        dx[..., self.index] = grad
        return (dx,)


class MeanTime(Function):
    def forward(self, x):
        self.shape = x.shape
        return x.mean(axis=-1)

    def backward(self, grad):
        length = self.shape[-1]
        return (np.repeat(grad[..., None] / length, length, axis=-1),)


# --- functional API ---------------------------------------------------------


def _pair(value: Union[int, Sequence[int]]) -> Pair:
    if isinstance(value, int):
        return value, value
    first, second = value
    return int(first), int(second)


def conv1d_causal(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """
    Dilated causal convolution over time.

    y[c, t] = b[c] + sum_i sum_ci w[c, ci, i] * x[ci, t - i*dilation],
    with x treated as zero before t = 0. Output length equals input length.

    Shapes: x (C_in, T) or (B, C_in, T); w (C_out, C_in, k); b (C_out,).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if dilation < 1:
        raise ConfigError(f"conv1d_causal: dilation must be >= 1, got {dilation}", dilation=dilation)
    if w.ndim != 3:
        raise DimensionError("conv1d_causal", "weight of shape (C_out, C_in, k)", w.shape)
    if w.shape[2] < 1:
        raise ConfigError("conv1d_causal: kernel size must be >= 1", kernel_size=w.shape[2])
    if x.ndim not in (2, 3):
        raise DimensionError("conv1d_causal", "input of shape (C_in, T) or (B, C_in, T)", x.shape)
    if x.shape[-2] != w.shape[1]:
        raise DimensionError("conv1d_causal", f"{w.shape[1]} input channels", x.shape)
    if b.shape != (w.shape[0],):
        raise DimensionError("conv1d_causal", f"bias of shape ({w.shape[0]},)", b.shape)
    return Conv1dCausal.apply(x, w, b, dilation=int(dilation))


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor,
    stride: Union[int, Sequence[int]] = (1, 1),
    padding: Union[int, Sequence[int]] = (0, 0),
) -> Tensor:
    """Cross-correlation with zero padding; x (C, H, W) or (B, C, H, W)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    stride, padding = _pair(stride), _pair(padding)
    if min(stride) < 1 or min(padding) < 0:
        raise ConfigError(f"conv2d: invalid stride {stride} / padding {padding}")
    if w.ndim != 4:
        raise DimensionError("conv2d", "weight of shape (C_out, C_in, kh, kw)", w.shape)
    if x.ndim not in (3, 4):
        raise DimensionError("conv2d", "input of shape (C, H, W) or (B, C, H, W)", x.shape)
    if x.shape[-3] != w.shape[1]:
        raise DimensionError("conv2d", f"{w.shape[1]} input channels", x.shape)
    if b.shape != (w.shape[0],):
        raise DimensionError("conv2d", f"bias of shape ({w.shape[0]},)", b.shape)
    height, width = x.shape[-2] + 2 * padding[0], x.shape[-1] + 2 * padding[1]
    if height < w.shape[2] or width < w.shape[3]:
        raise DimensionError(
            "conv2d",
            f"padded input at least {w.shape[2]}x{w.shape[3]}",
            x.shape,
            detail=f"padding={padding}",
        )
    return Conv2d.apply(x, w, b, stride=stride, padding=padding)


def maxpool2d(
    x: Tensor,
    size: Union[int, Sequence[int]] = (2, 2),
    stride: Optional[Union[int, Sequence[int]]] = None,
) -> Tensor:
    """Max pooling; gradient routes to the first maximal element of each window."""
    x = as_tensor(x)
    size = _pair(size)
    stride = size if stride is None else _pair(stride)
    if min(size) < 1 or min(stride) < 1:
        raise ConfigError(f"maxpool2d: invalid size {size} / stride {stride}")
    if x.ndim not in (3, 4):
        raise DimensionError("maxpool2d", "input of shape (C, H, W) or (B, C, H, W)", x.shape)
    if x.shape[-2] < size[0] or x.shape[-1] < size[1]:
        raise DimensionError("maxpool2d", f"input at least {size[0]}x{size[1]}", x.shape)
    return MaxPool2d.apply(x, size=size, stride=stride)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w.T + b over the last axis of x."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 2:
        raise DimensionError("linear", "weight of shape (D_out, D_in)", w.shape)
    if x.ndim < 1 or x.shape[-1] != w.shape[1]:
        raise DimensionError("linear", f"input with last axis {w.shape[1]}", x.shape)
    if b.shape != (w.shape[0],):
        raise DimensionError("linear", f"bias of shape ({w.shape[0]},)", b.shape)
    return Linear.apply(x, w, b)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(as_tensor(x))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate (C_a, T) and (C_b, T) into (C_a + C_b, T); batched inputs allowed."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or a.ndim != b.ndim:
        raise DimensionError("concat_channels", f"rank {a.ndim} input", b.shape)
    if a.shape[-1] != b.shape[-1] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(
            "concat_channels", f"matching length {a.shape[-1]}", b.shape, detail=f"left={a.shape}"
        )
    return ConcatChannels.apply(a, b)


def softmax_cross_entropy(logits: Tensor, labels: ArrayLike) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = as_tensor(logits)
    label_array = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise DimensionError("softmax_cross_entropy", "logits of shape (N, K), N >= 1", logits.shape)
    if label_array.shape != (logits.shape[0],):
        raise DimensionError(
            "softmax_cross_entropy", f"{logits.shape[0]} labels", label_array.shape
        )
    if not np.issubdtype(label_array.dtype, np.integer):
        if not np.issubdtype(label_array.dtype, np.number) or np.any(np.mod(label_array, 1) != 0):
            raise InputValidationError("labels must be integers", labels=label_array.tolist())
    label_array = label_array.astype(np.int64)
    out_of_range = (label_array < 0) | (label_array >= logits.shape[1])
    if out_of_range.any():
        raise InputValidationError(
            f"labels must be in [0, {logits.shape[1] - 1}]",
            labels=label_array[out_of_range].tolist(),
        )
    return SoftmaxCrossEntropy.apply(logits, labels=label_array)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError("add", f"shape {a.shape}", b.shape)
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError("mul", f"shape {a.shape}", b.shape)
    return Mul.apply(a, b)


def tensor_sum(x: Tensor) -> Tensor:
    return Sum.apply(as_tensor(x))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        np.empty(x.shape).reshape(shape)
    except ValueError:
        raise DimensionError("reshape", f"size compatible with {shape}", x.shape) from None
    return Reshape.apply(x, shape=shape)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError("transpose", f"a permutation of {x.ndim} axes", axes)
    return Transpose.apply(x, axes=axes)


def select_time(x: Tensor, index: int = -1) -> Tensor:
    """Pick one time step (last axis)."""
    x = as_tensor(x)
    if x.ndim < 1 or not -x.shape[-1] <= index < x.shape[-1]:
        raise DimensionError("select_time", f"time axis containing index {index}", x.shape)
    return SelectTime.apply(x, index=index)


def mean_time(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise DimensionError("mean_time", "non-empty time axis", x.shape)
    return MeanTime.apply(x)

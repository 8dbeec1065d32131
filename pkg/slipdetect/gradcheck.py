"""
Finite-difference gradient checks for every differentiable op.

Each case draws a random small problem, reduces the op output to a scalar with
a fixed random projection, and compares the analytic gradient of every input
to central differences.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import UsageError
from .tensor import (
    Tensor,
    concat_channels,
    conv1d_causal,
    conv2d,
    linear,
    maxpool2d,
    mul,
    relu,
    softmax_cross_entropy,
    tensor_sum,
)
from .temporal import MsTcnLayerConfig, branch_dilations, mstcn_layer_forward

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
KINK_MARGIN = 1e-3
MAX_REDRAWS = 50

LossFn = Callable[[], Tensor]
Case = Tuple[LossFn, Dict[str, Tensor]]


@dataclass(frozen=True)
class GradCheckResult:
    op: str
    case: int
    max_rel_error: float
    errors: Dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(loss_fn: LossFn, array: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences, perturbing ``array`` in place and restoring it."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + step
        plus = loss_fn().item()
        array[index] = original - step
        minus = loss_fn().item()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * step)
    return grad


def check_gradients(
    loss_fn: LossFn,
    inputs: Dict[str, Tensor],
    step: float = DEFAULT_STEP,
) -> Dict[str, float]:
    for tensor in inputs.values():
        tensor.zero_grad()
    loss_fn().backward()
    errors = {}
    for name, tensor in inputs.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        errors[name] = relative_error(analytic, numerical_gradient(loss_fn, tensor.data, step))
    return errors


def _param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _projected(out_fn: Callable[[], Tensor], rng: np.random.Generator) -> LossFn:
    """Scalar loss sum(out * r) for a fixed random r."""
    projection = Tensor(rng.normal(size=out_fn().shape))
    return lambda: tensor_sum(mul(out_fn(), projection))


def _clear_of_kinks(values: np.ndarray) -> bool:
    return bool(np.all(np.abs(values) > KINK_MARGIN))


def _conv1d_case(rng: np.random.Generator) -> Case:
    c_in, c_out = rng.integers(1, 5, size=2)
    length, taps = int(rng.integers(1, 9)), int(rng.integers(1, 4))
    dilation = int(rng.choice([1, 2, 4]))
    shape = (c_in, length) if rng.random() < 0.5 else (2, c_in, length)
    x, w, b = _param(rng, *shape), _param(rng, c_out, c_in, taps), _param(rng, c_out)
    loss = _projected(lambda: conv1d_causal(x, w, b, dilation), rng)
    return loss, {"x": x, "w": w, "b": b}


def _conv2d_case(rng: np.random.Generator) -> Case:
    c_in, c_out = rng.integers(1, 4, size=2)
    padding = int(rng.integers(0, 2))
    kernel = int(rng.integers(1, 4))
    size = int(rng.integers(max(2, kernel - 2 * padding), 6))
    stride = int(rng.integers(1, 3))
    x = _param(rng, c_in, size, size)
    w, b = _param(rng, c_out, c_in, kernel, kernel), _param(rng, c_out)
    loss = _projected(lambda: conv2d(x, w, b, stride=stride, padding=padding), rng)
    return loss, {"x": x, "w": w, "b": b}


def _maxpool_case(rng: np.random.Generator) -> Case:
    channels, size = int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4))
    # distinct values at least 0.1 apart keep every window's argmax stable under perturbation
    values = rng.permutation(channels * size * size).reshape(channels, size, size) * 0.1
    x = Tensor(values + rng.uniform(0, 0.01, size=values.shape), requires_grad=True)
    loss = _projected(lambda: maxpool2d(x, 2, 2), rng)
    return loss, {"x": x}


def _linear_case(rng: np.random.Generator) -> Case:
    n, d_in, d_out = (int(v) for v in rng.integers(1, 6, size=3))
    x, w, b = _param(rng, n, d_in), _param(rng, d_out, d_in), _param(rng, d_out)
    loss = _projected(lambda: linear(x, w, b), rng)
    return loss, {"x": x, "w": w, "b": b}


def _relu_case(rng: np.random.Generator) -> Case:
    values = rng.normal(size=(3, 5))
    while not _clear_of_kinks(values):
        values = rng.normal(size=(3, 5))
    x = Tensor(values, requires_grad=True)
    loss = _projected(lambda: relu(x), rng)
    return loss, {"x": x}


def _concat_case(rng: np.random.Generator) -> Case:
    length = int(rng.integers(1, 6))
    a = _param(rng, int(rng.integers(1, 4)), length)
    b = _param(rng, int(rng.integers(1, 4)), length)
    loss = _projected(lambda: concat_channels(a, b), rng)
    return loss, {"a": a, "b": b}


def _cross_entropy_case(rng: np.random.Generator) -> Case:
    n = int(rng.integers(1, 5))
    logits = _param(rng, n, 2)
    labels = rng.integers(0, 2, size=n)
    return (lambda: softmax_cross_entropy(logits, labels)), {"logits": logits}


def _mstcn_layer_case(rng: np.random.Generator) -> Case:
    for _ in range(MAX_REDRAWS):
        branches = int(rng.integers(1, 4))
        layer = MsTcnLayerConfig(
            in_channels=int(rng.integers(1, 5)),
            out_channels=branches * int(rng.integers(1, 3)),
            branches=branches,
            kernel_size=int(rng.integers(1, 4)),
            dilations=branch_dilations(branches),
        )
        length = int(rng.integers(1, 9))
        x = _param(rng, layer.in_channels, length)
        weights = [
            (_param(rng, c, layer.in_channels, layer.kernel_size), _param(rng, c))
            for c in layer.channel_split
        ]
        # redraw when any pre-activation sits on the relu kink
        pre = mstcn_layer_forward(x, layer, weights, activation="none").data
        if _clear_of_kinks(pre):
            break
    else:
        raise UsageError(f"mstcn_layer: no draw cleared the relu kink margin in {MAX_REDRAWS} tries")
    inputs = {"x": x}
    for j, (w, b) in enumerate(weights):
        inputs[f"branch{j}.weight"] = w
        inputs[f"branch{j}.bias"] = b
    loss = _projected(lambda: mstcn_layer_forward(x, layer, weights, activation="relu"), rng)
    return loss, inputs


CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "conv1d_causal": _conv1d_case,
    "conv2d": _conv2d_case,
    "maxpool2d": _maxpool_case,
    "linear": _linear_case,
    "relu": _relu_case,
    "concat_channels": _concat_case,
    "softmax_cross_entropy": _cross_entropy_case,
    "mstcn_layer": _mstcn_layer_case,
}


def run_gradcheck(
    cases: int = 200,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
    ops: Optional[List[str]] = None,
) -> List[GradCheckResult]:
    """Round-robin over ops, one freshly drawn problem per case."""
    names = list(ops or CASES)
    unknown = sorted(set(names) - set(CASES))
    if unknown:
        raise UsageError(f"unknown ops {', '.join(unknown)}; available: {', '.join(CASES)}", ops=unknown)
    if cases < 1:
        raise UsageError(f"case count must be >= 1, got {cases}")
    rng = np.random.default_rng(seed)
    results = []
    for case in range(cases):
        op = names[case % len(names)]
        loss_fn, inputs = CASES[op](rng)
        errors = check_gradients(loss_fn, inputs, step)
        result = GradCheckResult(op, case, max(errors.values()), errors, tolerance)
        if not result.passed:
            logger.warning("Gradient check failed for %s (case %d): %.3e", op, case, result.max_rel_error)
        results.append(result)
    return results

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError, TrainingAbortedError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter Adam moments and step counter."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}", lr=self.lr)
        for label, beta in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 < beta < 1.0:
                raise ConfigError(f"{label} must be in (0, 1), got {beta}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")


def adam_step(
    param: Tensor, grad: np.ndarray, state: AdamState, name: str = ""
) -> Tuple[Tensor, AdamState]:
    """
    One bias-corrected Adam update, applied to ``param.data`` in place.

    A non-finite gradient aborts training before any moment is touched.
    """
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != param.shape:
        raise DimensionError("adam_step", f"gradient of shape {param.shape}", g.shape, detail=name)
    if not np.all(np.isfinite(g)):
        label = name or param.name or "<unnamed>"
        raise TrainingAbortedError(
            f"non-finite gradient for parameter {label}", parameter=label
        )

    if state.m is None or state.v is None:
        state.m = np.zeros_like(g)
        state.v = np.zeros_like(g)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param, state


class Adam:
    """
    Adam over a named parameter set.

    Only parameters with requires_grad are updated; frozen ones are never
    touched. A parameter without a gradient is stepped with a zero gradient.
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-7,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: Dict[str, Tensor] = {
            name: p for name, p in params.items() if p.requires_grad
        }
        self.states: Dict[str, AdamState] = {
            name: AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps) for name in self.params
        }
        skipped = len(params) - len(self.params)
        if skipped:
            logger.debug("Adam skipping %d frozen parameters", skipped)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p, grad, self.states[name], name=name)

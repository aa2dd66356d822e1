"""Adaptive-moment (Adam) parameter updates."""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ParamStore, Tensor
from ..errors import NonFiniteError, UsageError


@dataclass
class OptimizerState:
    """Parameters with their first and second moment estimates."""

    params: ParamStore
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, tensor in self.params.items():
            self.m.setdefault(name, np.zeros_like(tensor))
            self.v.setdefault(name, np.zeros_like(tensor))


def optimizer_step(state: OptimizerState, gradients: Mapping[str, Tensor], lr: float) -> OptimizerState:
    """One bias-corrected Adam update, applied in place; returns state."""
    for name, grad in gradients.items():
        if name not in state.params:
            raise UsageError(f"gradient for unknown parameter '{name}'")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradient of {name}", "optimizer step aborted")
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, param in state.params.items():
        grad = gradients.get(name)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        v *= state.beta2
        if grad is None:
            continue
        m += (1.0 - state.beta1) * grad
        v += (1.0 - state.beta2) * grad * grad
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return state

"""Bias-corrected adaptive-moment (Adam) updates over named parameter tensors."""

from dataclasses import dataclass, field
from typing import ClassVar, Dict, Mapping, Tuple

import numpy as np

from ..utils.errors import NumericError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class OptimizerState:
    """First and second moment accumulators per parameter plus the step counter."""

    BETA1: ClassVar[float] = 0.9
    BETA2: ClassVar[float] = 0.999
    EPS: ClassVar[float] = 1e-8

    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def initial(cls, params: Mapping[str, Tensor]) -> "OptimizerState":
        return cls(
            first_moment={n: np.zeros(t.shape) for n, t in params.items()},
            second_moment={n: np.zeros(t.shape) for n, t in params.items()},
            step=0,
        )


def optimizer_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Tensor],
    state: OptimizerState,
    learning_rate: float,
) -> Tuple[Dict[str, Tensor], OptimizerState]:
    """
    Apply one Adam update.

    Args:
        params: Current parameters by name
        grads: Gradients by the same names
        state: Moments from the previous step
        learning_rate: Step size

    Returns:
        Tuple of (updated parameters, updated state); inputs are left untouched

    Raises:
        ShapeError: If a gradient's shape differs from its parameter
        NumericError: If a gradient holds NaN or Inf, naming the parameter
    """
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"Gradient for {name} has shape {grad.shape}, expected {param.shape}")
        if not grad.is_finite():
            raise NumericError(f"Non-finite gradient for parameter {name}")

    step = state.step + 1
    beta1, beta2, eps = OptimizerState.BETA1, OptimizerState.BETA2, OptimizerState.EPS
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step

    new_params: Dict[str, Tensor] = {}
    first: Dict[str, np.ndarray] = {}
    second: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        grad = grads[name].data.astype(np.float64)
        m = beta1 * state.first_moment.get(name, 0.0) + (1.0 - beta1) * grad
        v = beta2 * state.second_moment.get(name, 0.0) + (1.0 - beta2) * grad * grad
        update = learning_rate * (m / correction1) / (np.sqrt(v / correction2) + eps)
        value = param.data.astype(np.float64) - update
        new_params[name] = Tensor.wrap(value.astype(param.data.dtype))
        first[name] = m
        second[name] = v
    return new_params, OptimizerState(first_moment=first, second_moment=second, step=step)

# -*- coding: utf-8 -*-
"""Adam with coupled L2 weight decay and a step-decay learning-rate schedule."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .errors import ConfigurationError, NonFiniteGradientError
from .tensor import Tensor

logger = logging.getLogger(__name__)

# --- Constants ---
BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LR_STEP_EPOCHS = 15
DEFAULT_LR_STEP_FACTOR = 0.1


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor]) -> "OptimizerState":
        return cls({name: np.zeros_like(t.data) for name, t in params.items()},
                   {name: np.zeros_like(t.data) for name, t in params.items()})


def _checked_grads(params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    grads = {}
    for name, t in params.items():
        grad = np.zeros_like(t.data) if t.grad is None else t.grad
        if grad.shape != t.data.shape:
            raise NonFiniteGradientError(f"Gradient of {name} has shape {grad.shape}, expected {t.data.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f"Gradient of parameter {name} contains NaN or Inf; refusing to step")
        grads[name] = grad
    return grads


def adam_step(params: Mapping[str, Tensor], state: OptimizerState, lr: float,
              weight_decay: float) -> OptimizerState:
    """One in-place Adam update of every parameter; gradients are cleared afterwards.

    Parameters without a gradient are treated as having a zero gradient. Nothing is
    modified when any gradient is non-finite.
    """
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be > 0, got {lr}")
    if weight_decay < 0:
        raise ConfigurationError(f"weight_decay must be >= 0, got {weight_decay}")
    grads = _checked_grads(params)

    state.step += 1
    correction1 = 1.0 - BETA1 ** state.step
    correction2 = 1.0 - BETA2 ** state.step
    for name, t in params.items():
        grad = grads[name]
        if weight_decay:
            grad = grad + weight_decay * t.data
        m = state.m.setdefault(name, np.zeros_like(t.data))
        v = state.v.setdefault(name, np.zeros_like(t.data))
        m *= BETA1
        m += (1.0 - BETA1) * grad
        v *= BETA2
        v += (1.0 - BETA2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        t.data -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(t.data.dtype, copy=False)
        t.zero_grad()
    return state


@dataclass
class StepDecaySchedule:
    """lr(epoch) = base_lr * factor ** (epoch // step_epochs), epochs counted from 0."""
    base_lr: float
    step_epochs: int = DEFAULT_LR_STEP_EPOCHS
    factor: float = DEFAULT_LR_STEP_FACTOR

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.base_lr}")
        if self.step_epochs < 1:
            raise ConfigurationError(f"lr_step_epochs must be >= 1, got {self.step_epochs}")
        if not 0 < self.factor <= 1:
            raise ConfigurationError(f"lr_step_factor must lie in (0, 1], got {self.factor}")

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.factor ** (epoch // self.step_epochs)

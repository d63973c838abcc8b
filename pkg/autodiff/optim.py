"""
Adam optimizer over named parameter tensors
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from autodiff.tensor import Tensor
from utils.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates plus the step counter"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """
    One bias-corrected Adam update, applied to the arrays in place

    Parameters whose gradient is missing are treated as having zero gradient.

    Args:
        params: name -> parameter array (modified in place)
        grads: name -> gradient array of the same shape, or None
        state: moment estimates; t is incremented
        lr: learning rate

    Returns:
        The updated state
    """
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t

    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        if grad.shape != value.shape:
            raise ShapeError("adam_step", value.shape, grad.shape, detail=name)

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v

        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)

    return state


class Adam:
    """Adam bound to a dictionary of parameter tensors"""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 0.03,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    @property
    def steps(self) -> int:
        return self.state.t

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self):
        adam_step(
            {name: tensor.data for name, tensor in self.params.items()},
            {name: tensor.grad for name, tensor in self.params.items()},
            self.state,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )

"""
Finite-difference gradient checking
"""

from typing import Callable, Dict, Mapping

import numpy as np

from autodiff.tensor import Tensor, no_grad


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar loss with respect to every entry of tensor"""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = loss_fn().item()
            flat[i] = original - eps
            minus = loss_fn().item()
            flat[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)"""
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denominator)) if analytic.size else 0.0


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    eps: float = 1e-5,
    floor: float = 1e-8,
) -> Dict[str, float]:
    """
    Compare backward() gradients with central differences

    loss_fn must rebuild the graph on every call and be deterministic.

    Returns:
        name -> max relative error
    """
    for tensor in tensors.values():
        tensor.zero_grad()
    loss_fn().backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in tensors.items()
    }
    return {
        name: relative_error(analytic[name], numerical_gradient(loss_fn, t, eps), floor)
        for name, t in tensors.items()
    }

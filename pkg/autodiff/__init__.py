"""
Reverse-mode differentiation package
"""

from autodiff.tensor import Graph, Tensor, as_tensor, backward, is_grad_enabled, no_grad, zero_grad
from autodiff.optim import Adam, AdamState, adam_step
from autodiff.checkpoint import load_arrays, save_arrays
from autodiff.gradcheck import check_gradients, numerical_gradient, relative_error

__all__ = [
    'Adam',
    'AdamState',
    'Graph',
    'Tensor',
    'adam_step',
    'as_tensor',
    'backward',
    'check_gradients',
    'is_grad_enabled',
    'load_arrays',
    'no_grad',
    'numerical_gradient',
    'relative_error',
    'save_arrays',
    'zero_grad',
]

"""
Differentiable primitives
Forward values are computed eagerly; backward closures return exact gradients
"""

from typing import Optional, Sequence

import numpy as np

from autodiff.tensor import Tensor, as_tensor, is_grad_enabled
from utils.errors import ShapeError


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward, op=op)
    return Tensor(data, op=op)


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


# ------------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    """Elementwise sum; b may also be a bias vector matching a's last axis"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        axes = tuple(range(a.ndim - 1))
        return _result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=axes)), "bias_add")
    raise ShapeError("add", a.shape, b.shape)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a, factor: float) -> Tensor:
    """Multiply by a constant"""
    a = as_tensor(a)
    factor = float(factor)
    return _result(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def shift(a, constant: float) -> Tensor:
    """Add a constant"""
    a = as_tensor(a)
    constant = float(constant)
    return _result(a.data + constant, (a,), lambda g: (g,), "shift")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


# ------------------------------------------------------------------- structural


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError("reshape", a.shape, shape)
    original = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(original),), "reshape")


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Rows start:stop along the first axis"""
    a = as_tensor(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeError("slice_rows", a.shape, detail=f"rows {start}:{stop}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _result(a.data[start:stop], (a,), backward, "slice_rows")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", detail="no inputs")
    reference = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(reference) or any(
            x != y for i, (x, y) in enumerate(zip(other, reference)) if i != axis % len(reference)
        ):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


# ------------------------------------------------------------------- reductions


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.array(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),), "sum_all")


def mean_over_axis(a, axis: int) -> Tensor:
    a = as_tensor(a)
    count = a.shape[axis]

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape) / count,)

    return _result(a.data.mean(axis=axis), (a,), backward, "mean_over_axis")


def max_over_axis(a, axis: int) -> Tensor:
    """Maximum along an axis; gradient routes to the first maximal entry"""
    a = as_tensor(a)
    index = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, index, axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, index, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _result(out, (a,), backward, "max_over_axis")


# ---------------------------------------------------------------------- linear


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """x [B, in] @ weight [in, out] + bias [out]"""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError("linear", x.shape, weight.shape)
    out = matmul(x, weight)
    if bias is None:
        return out
    bias = as_tensor(bias)
    if bias.shape != (weight.shape[1],):
        raise ShapeError("linear", weight.shape, bias.shape, detail="bias")
    return add(out, bias)


def squared_difference_sum(a, b) -> Tensor:
    """Pairwise squared distances between rows: out[q, p] = sum_d (a[q, d] - b[p, d])^2"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("squared_difference_sum", a.shape, b.shape)
    diff = a.data[:, None, :] - b.data[None, :, :]
    out = np.einsum("qpd,qpd->qp", diff, diff)

    def backward(g):
        weighted = g[:, :, None] * diff
        return 2.0 * weighted.sum(axis=1), -2.0 * weighted.sum(axis=0)

    return _result(out, (a, b), backward, "squared_difference_sum")


# ------------------------------------------------------------------ convolution


def conv2d(x, weight) -> Tensor:
    """
    3x3 convolution, stride 1, zero padding 1

    Args:
        x: [B, C, H, W]
        weight: [O, C, 3, 3]
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (3, 3) or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d", x.shape, weight.shape)

    batch, _, height, width = x.shape
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((batch, weight.shape[0], height, width))
    for i in range(3):
        for j in range(3):
            window = padded[:, :, i:i + height, j:j + width]
            out += np.einsum("bchw,oc->bohw", window, weight.data[:, :, i, j], optimize=True)

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        for i in range(3):
            for j in range(3):
                window = padded[:, :, i:i + height, j:j + width]
                grad_weight[:, :, i, j] = np.einsum("bohw,bchw->oc", g, window, optimize=True)
                grad_padded[:, :, i:i + height, j:j + width] += np.einsum(
                    "bohw,oc->bchw", g, weight.data[:, :, i, j], optimize=True
                )
        return grad_padded[:, :, 1:-1, 1:-1], grad_weight

    return _result(out, (x, weight), backward, "conv2d")


def max_pool2d(x) -> Tensor:
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped"""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError("max_pool2d", x.shape, detail="needs [B, C, H>=2, W>=2]")

    batch, channels, height, width = x.shape
    h2, w2 = height // 2, width // 2
    windows = (
        x.data[:, :, :2 * h2, :2 * w2]
        .reshape(batch, channels, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, h2, w2, 4)
    )
    index = np.argmax(windows, axis=-1)[..., None]
    out = np.take_along_axis(windows, index, axis=-1)[..., 0]

    def backward(g):
        grad_windows = np.zeros_like(windows)
        np.put_along_axis(grad_windows, index, g[..., None], axis=-1)
        grad = np.zeros_like(x.data)
        grad[:, :, :2 * h2, :2 * w2] = (
            grad_windows.reshape(batch, channels, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, 2 * h2, 2 * w2)
        )
        return (grad,)

    return _result(out, (x,), backward, "max_pool2d")


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel batch normalization over [B, C] or [B, C, H, W] inputs

    Train mode normalizes with batch statistics and updates the running buffers
    in place; eval mode is the fixed affine map given by the running buffers.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim not in (2, 4) or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batch_norm", x.shape, gamma.shape)

    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    view = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    count = x.size // x.shape[1]

    if training:
        if count < 2:
            raise ShapeError("batch_norm", x.shape, detail="train mode needs more than one value per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mean = running_mean.copy()
        var = running_var.copy()

    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = (x.data - mean.reshape(view)) * inv_std.reshape(view)
    out = normalized * gamma.data.reshape(view) + beta.data.reshape(view)

    def backward(g):
        grad_gamma = (g * normalized).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        grad_normalized = g * gamma.data.reshape(view)
        if training:
            grad_x = (
                inv_std.reshape(view) / count
                * (
                    count * grad_normalized
                    - grad_normalized.sum(axis=axes).reshape(view)
                    - normalized * (grad_normalized * normalized).sum(axis=axes).reshape(view)
                )
            )
        else:
            grad_x = grad_normalized * inv_std.reshape(view)
        return grad_x, grad_gamma, grad_beta

    return _result(out, (x, gamma, beta), backward, "batch_norm")


# ---------------------------------------------------------------- fused losses


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Row-wise softmax of a plain array (no graph)"""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=axis, keepdims=True)


def sigmoid(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values, dtype=np.float64)
    positive = values >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-values[positive]))
    exp_values = np.exp(values[~positive])
    out[~positive] = exp_values / (1.0 + exp_values)
    return out


def softmax_with_cross_entropy(logits, targets: Sequence[int]) -> Tensor:
    """
    Mean cross-entropy of row-wise softmax against integer targets

    Args:
        logits: [Q, C]
        targets: Q class indices in 0..C-1
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError("softmax_with_cross_entropy", logits.shape, targets.shape)
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError("softmax_with_cross_entropy", logits.shape, targets.shape, detail="target out of range")

    rows = np.arange(logits.shape[0])
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_normalizer = np.log(np.exp(shifted).sum(axis=1))
    losses = log_normalizer - shifted[rows, targets]
    probabilities = np.exp(shifted - log_normalizer[:, None])

    def backward(g):
        grad = probabilities.copy()
        grad[rows, targets] -= 1.0
        return (grad * (float(g) / logits.shape[0]),)

    return _result(np.array(losses.mean()), (logits,), backward, "softmax_with_cross_entropy")


def sigmoid_with_binary_cross_entropy(logits, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of elementwise sigmoid against 0/1 targets"""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ShapeError("sigmoid_with_binary_cross_entropy", logits.shape, targets.shape)

    z = logits.data
    losses = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))

    def backward(g):
        return ((sigmoid(z) - targets) * (float(g) / z.size),)

    return _result(np.array(losses.mean()), (logits,), backward, "sigmoid_with_binary_cross_entropy")


def weighted_sum(terms: Sequence[Tensor], weights: Optional[Sequence[float]] = None) -> Tensor:
    """Sum of scaled scalar terms, accumulated left to right"""
    terms = [as_tensor(t) for t in terms]
    if not terms:
        raise ShapeError("weighted_sum", detail="no terms")
    weights = [1.0] * len(terms) if weights is None else list(weights)
    total = None
    for term, weight in zip(terms, weights):
        scaled = scale(term, weight)
        total = scaled if total is None else add(total, scaled)
    return total

"""
Embedding backbone f_θ
Four conv blocks over a log-Mel patch, or a small MLP over feature vectors
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from autodiff import ops
from autodiff.checkpoint import load_arrays, save_arrays
from autodiff.tensor import Tensor, as_tensor
from utils.errors import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)

CONV_BLOCKS = 4


class BackboneKind(str, Enum):
    CONV4 = "conv4"
    MLP = "mlp"


class EmbedMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class BackboneConfig(BaseModel):
    """
    Architecture of f_θ

    conv4 consumes [mel bins, frames] patches; mlp consumes flat feature vectors.
    pre_projection_dim is derived from the conv stack when left unset.
    """
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    kind: BackboneKind = BackboneKind.CONV4
    input_shape: List[int] = Field(default_factory=lambda: [128, 122])
    channel_widths: List[int] = Field(default_factory=lambda: [64, 64, 64, 128])
    embedding_dim: int = Field(default=128, gt=0)
    pre_projection_dim: Optional[int] = Field(default=None, gt=0)
    hidden_dims: List[int] = Field(default_factory=lambda: [256])
    seed: int = 0

    @model_validator(mode="after")
    def _check_architecture(self) -> "BackboneConfig":
        if any(d <= 0 for d in self.input_shape):
            raise ValueError(f"input_shape must be positive, got {self.input_shape}")
        if self.kind == BackboneKind.CONV4:
            if len(self.channel_widths) != CONV_BLOCKS:
                raise ValueError(f"conv4 needs {CONV_BLOCKS} channel widths, got {len(self.channel_widths)}")
            if len(self.input_shape) != 2:
                raise ValueError(f"conv4 input_shape is [mel bins, frames], got {self.input_shape}")
            if any(c <= 0 for c in self.channel_widths):
                raise ValueError("channel widths must be positive")
        else:
            if len(self.input_shape) != 1:
                raise ValueError(f"mlp input_shape is [feature dim], got {self.input_shape}")
            if any(d <= 0 for d in self.hidden_dims):
                raise ValueError("hidden dims must be positive")
        return self

    def pooled_shape(self) -> Tuple[int, int]:
        """(mel rows, frames) left after the four 2x2 pools"""
        rows, frames = self.input_shape
        for _ in range(CONV_BLOCKS):
            if rows < 2 or frames < 2:
                raise ConfigError(
                    f"input {self.input_shape} is too small for {CONV_BLOCKS} 2x2 pooling stages"
                )
            rows, frames = rows // 2, frames // 2
        return rows, frames

    def feature_dim(self) -> int:
        """Width of the vector fed to the final projection"""
        if self.kind == BackboneKind.MLP:
            return ([self.input_shape[0]] + list(self.hidden_dims))[-1]
        rows, _ = self.pooled_shape()
        derived = self.channel_widths[-1] * rows
        if self.pre_projection_dim is not None and self.pre_projection_dim != derived:
            raise ConfigError(
                f"pre_projection_dim {self.pre_projection_dim} does not match "
                f"{self.channel_widths[-1]} channels x {rows} mel rows = {derived}"
            )
        return derived

    def layer_dims(self) -> List[int]:
        """MLP layer widths from input to embedding"""
        return [self.input_shape[0]] + list(self.hidden_dims) + [self.embedding_dim]


@dataclass
class ParameterSet:
    """Trainable parameters θ plus batch-norm running statistics"""
    config: BackboneConfig
    params: Dict[str, Tensor] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {name: t.data for name, t in self.params.items()}
        out.update(self.buffers)
        return out

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            config=self.config,
            params={n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self.params.items()},
            buffers={n: b.copy() for n, b in self.buffers.items()},
        )

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()


def _he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: BackboneConfig) -> ParameterSet:
    """
    Deterministic He-uniform initialisation for a given config seed

    Returns:
        ParameterSet with zero biases and batch-norm gamma=1, beta=0
    """
    rng = np.random.default_rng(config.seed)
    params: Dict[str, Tensor] = {}
    buffers: Dict[str, np.ndarray] = {}

    if config.kind == BackboneKind.CONV4:
        in_channels = 1
        for i, width in enumerate(config.channel_widths):
            params[f"block{i}.conv.weight"] = Tensor(
                _he_uniform(rng, (width, in_channels, 3, 3), in_channels * 9), requires_grad=True
            )
            params[f"block{i}.bn.gamma"] = Tensor(np.ones(width), requires_grad=True)
            params[f"block{i}.bn.beta"] = Tensor(np.zeros(width), requires_grad=True)
            buffers[f"block{i}.bn.running_mean"] = np.zeros(width)
            buffers[f"block{i}.bn.running_var"] = np.ones(width)
            in_channels = width
        fan_in = config.feature_dim()
        params["projection.weight"] = Tensor(
            _he_uniform(rng, (fan_in, config.embedding_dim), fan_in), requires_grad=True
        )
        params["projection.bias"] = Tensor(np.zeros(config.embedding_dim), requires_grad=True)
    else:
        dims = config.layer_dims()
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            params[f"layer{i}.weight"] = Tensor(_he_uniform(rng, (fan_in, fan_out), fan_in), requires_grad=True)
            params[f"layer{i}.bias"] = Tensor(np.zeros(fan_out), requires_grad=True)

    theta = ParameterSet(config=config, params=params, buffers=buffers)
    logger.debug(f"Initialised {config.kind.value} backbone with {theta.n_parameters} parameters")
    return theta


def embed(theta: ParameterSet, batch, mode: Union[EmbedMode, str] = EmbedMode.EVAL) -> Tensor:
    """
    Map a batch of inputs to embeddings

    Args:
        theta: Parameters from init_params or load_params
        batch: [B, mel bins, frames] for conv4, [B, feature dim] for mlp
        mode: 'train' uses batch statistics and updates running buffers; 'eval'
            uses the running buffers so each row is embedded independently

    Returns:
        Tensor [B, embedding_dim]
    """
    config = theta.config
    training = EmbedMode(mode) == EmbedMode.TRAIN
    x = as_tensor(batch)
    expected = tuple(config.input_shape)

    if config.kind == BackboneKind.MLP:
        if x.ndim != 2 or x.shape[1:] != expected:
            raise ShapeError("embed", x.shape, (-1,) + expected)
        n_layers = len(config.layer_dims()) - 1
        for i in range(n_layers):
            x = ops.linear(x, theta.params[f"layer{i}.weight"], theta.params[f"layer{i}.bias"])
            if i < n_layers - 1:
                x = ops.relu(x)
        return x

    if x.ndim == 4 and x.shape[1] == 1:
        x = ops.reshape(x, (x.shape[0],) + x.shape[2:])
    if x.ndim != 3 or x.shape[1:] != expected:
        raise ShapeError("embed", x.shape, (-1,) + expected)

    batch_size = x.shape[0]
    x = ops.reshape(x, (batch_size, 1) + expected)
    for i in range(CONV_BLOCKS):
        x = ops.conv2d(x, theta.params[f"block{i}.conv.weight"])
        x = ops.batch_norm(
            x,
            theta.params[f"block{i}.bn.gamma"],
            theta.params[f"block{i}.bn.beta"],
            theta.buffers[f"block{i}.bn.running_mean"],
            theta.buffers[f"block{i}.bn.running_var"],
            training=training,
        )
        x = ops.relu(x)
        x = ops.max_pool2d(x)

    _, channels, rows, frames = x.shape
    x = ops.reshape(x, (batch_size, channels * rows, frames))
    x = ops.max_over_axis(x, axis=2)
    return ops.linear(x, theta.params["projection.weight"], theta.params["projection.bias"])


def save_params(theta: ParameterSet, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
    """Write θ and its buffers with the backbone config embedded in the manifest"""
    meta = dict(metadata or {})
    meta["backbone"] = theta.config.model_dump(mode="json")
    meta["buffers"] = sorted(theta.buffers)
    return save_arrays(path, theta.arrays(), meta)


def load_params(path: Union[str, Path], config: Optional[BackboneConfig] = None) -> ParameterSet:
    """
    Restore a ParameterSet; when config is given it must match the stored one
    """
    arrays, meta = load_arrays(path)
    stored = BackboneConfig.model_validate(meta.get("backbone", {}))
    if config is not None and config != stored:
        raise DataError(f"checkpoint {path} was trained with a different backbone config")

    template = init_params(stored)
    buffer_names = set(meta.get("buffers", []))
    for name, tensor in template.params.items():
        if name not in arrays or arrays[name].shape != tensor.shape:
            raise DataError(f"checkpoint {path} is missing parameter '{name}' or has the wrong shape")
        tensor.data = arrays[name].copy()
    for name in template.buffers:
        if name not in buffer_names or name not in arrays:
            raise DataError(f"checkpoint {path} is missing buffer '{name}'")
        template.buffers[name] = arrays[name].copy()
    return template

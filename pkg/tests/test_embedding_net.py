"""
Unit tests for the embedding backbone
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from autodiff import backward, ops
from models.embedding_net import (
    BackboneConfig,
    BackboneKind,
    EmbedMode,
    embed,
    init_params,
    load_params,
    save_params,
)
from utils.errors import ConfigError, DataError, ShapeError


@pytest.fixture
def tiny_conv():
    return BackboneConfig(kind="conv4", input_shape=[16, 20], channel_widths=[2, 3, 3, 4], embedding_dim=5, seed=3)


@pytest.fixture
def tiny_mlp():
    return BackboneConfig(kind="mlp", input_shape=[6], hidden_dims=[8, 7], embedding_dim=4, seed=3)


class TestBackboneConfig:
    """Architecture validation"""

    def test_default_conv4_projection_width(self):
        config = BackboneConfig()
        assert config.kind == BackboneKind.CONV4
        assert config.pooled_shape() == (8, 7)
        assert config.feature_dim() == 1024
        assert config.embedding_dim == 128

    def test_explicit_matching_pre_projection_dim(self):
        assert BackboneConfig(pre_projection_dim=1024).feature_dim() == 1024

    def test_mismatching_pre_projection_dim_raises(self):
        with pytest.raises(ConfigError):
            init_params(BackboneConfig(pre_projection_dim=512))

    def test_input_too_small_for_four_pools(self):
        with pytest.raises(ConfigError):
            init_params(BackboneConfig(input_shape=[8, 122]))

    def test_wrong_number_of_blocks_is_rejected(self):
        with pytest.raises(ValidationError):
            BackboneConfig(channel_widths=[64, 64, 64])

    def test_unknown_field_is_rejected(self):
        with pytest.raises(ValidationError):
            BackboneConfig(dropout=0.1)


class TestInitParams:
    """Parameter layout and determinism"""

    def test_default_conv4_layout(self):
        theta = init_params(BackboneConfig())
        assert theta.params["block0.conv.weight"].shape == (64, 1, 3, 3)
        assert theta.params["block3.conv.weight"].shape == (128, 64, 3, 3)
        assert theta.params["projection.weight"].shape == (1024, 128)
        assert set(theta.buffers) == {
            f"block{i}.bn.{name}" for i in range(4) for name in ("running_mean", "running_var")
        }
        convs = 64 * 9 + 64 * 64 * 9 + 64 * 64 * 9 + 128 * 64 * 9
        batch_norm = 2 * (64 + 64 + 64 + 128)
        assert theta.n_parameters == convs + batch_norm + 1024 * 128 + 128

    def test_same_seed_same_parameters(self, tiny_conv):
        a, b = init_params(tiny_conv), init_params(tiny_conv)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_different_parameters(self, tiny_conv):
        a = init_params(tiny_conv)
        b = init_params(tiny_conv.model_copy(update={"seed": 4}))
        assert not np.array_equal(a.params["block0.conv.weight"].data, b.params["block0.conv.weight"].data)

    def test_he_uniform_bound(self, tiny_conv):
        weight = init_params(tiny_conv).params["block1.conv.weight"].data
        assert np.abs(weight).max() <= np.sqrt(6.0 / (2 * 9))

    def test_copy_is_independent(self, tiny_conv):
        theta = init_params(tiny_conv)
        clone = theta.copy()
        clone.params["projection.bias"].data += 1.0
        clone.buffers["block0.bn.running_mean"] += 1.0
        assert np.all(theta.params["projection.bias"].data == 0.0)
        assert np.all(theta.buffers["block0.bn.running_mean"] == 0.0)


class TestEmbed:
    """Forward pass"""

    @pytest.fixture
    def batch(self):
        return np.random.default_rng(0).normal(size=(5, 16, 20))

    def test_conv4_output_shape(self, tiny_conv, batch):
        out = embed(init_params(tiny_conv), batch, EmbedMode.EVAL)
        assert out.shape == (5, 5)

    def test_channel_axis_is_accepted(self, tiny_conv, batch):
        theta = init_params(tiny_conv)
        np.testing.assert_array_equal(
            embed(theta, batch[:, None], "eval").data,
            embed(theta, batch, "eval").data,
        )

    def test_wrong_shape_raises(self, tiny_conv):
        with pytest.raises(ShapeError) as info:
            embed(init_params(tiny_conv), np.zeros((2, 16, 21)))
        assert "embed" in str(info.value)

    def test_eval_mode_embeds_rows_independently(self, tiny_conv, batch):
        theta = init_params(tiny_conv)
        together = embed(theta, batch, EmbedMode.EVAL).data
        for i in range(batch.shape[0]):
            alone = embed(theta, batch[i:i + 1], EmbedMode.EVAL).data
            np.testing.assert_allclose(alone[0], together[i], rtol=1e-10, atol=1e-12)

    def test_train_mode_updates_running_statistics(self, tiny_conv, batch):
        theta = init_params(tiny_conv)
        embed(theta, batch, EmbedMode.TRAIN)
        assert np.any(theta.buffers["block0.bn.running_mean"] != 0.0)

    def test_eval_mode_leaves_running_statistics(self, tiny_conv, batch):
        theta = init_params(tiny_conv)
        embed(theta, batch, EmbedMode.EVAL)
        assert np.all(theta.buffers["block0.bn.running_mean"] == 0.0)
        assert np.all(theta.buffers["block0.bn.running_var"] == 1.0)

    def test_gradients_reach_every_parameter(self, tiny_conv, batch):
        theta = init_params(tiny_conv)
        backward(ops.sum_all(ops.mul(embed(theta, batch, EmbedMode.TRAIN), embed(theta, batch, EmbedMode.TRAIN))))
        for name, tensor in theta.params.items():
            assert tensor.grad is not None, name
            assert tensor.grad.shape == tensor.shape

    def test_mlp_output_shape(self, tiny_mlp):
        theta = init_params(tiny_mlp)
        assert sorted(theta.params) == sorted(
            f"layer{i}.{kind}" for i in range(3) for kind in ("weight", "bias")
        )
        out = embed(theta, np.ones((3, 6)))
        assert out.shape == (3, 4)

    def test_mlp_wrong_width_raises(self, tiny_mlp):
        with pytest.raises(ShapeError):
            embed(init_params(tiny_mlp), np.ones((3, 7)))


class TestParameterFiles:
    """Saving and restoring θ"""

    def test_roundtrip_preserves_embeddings(self, tiny_conv, tmp_path):
        theta = init_params(tiny_conv)
        batch = np.random.default_rng(1).normal(size=(3, 16, 20))
        embed(theta, batch, EmbedMode.TRAIN)
        path = save_params(theta, tmp_path / "model", {"step": 3})

        restored = load_params(path, tiny_conv)
        np.testing.assert_array_equal(
            embed(restored, batch, EmbedMode.EVAL).data,
            embed(theta, batch, EmbedMode.EVAL).data,
        )

    def test_config_is_read_from_the_file(self, tiny_mlp, tmp_path):
        path = save_params(init_params(tiny_mlp), tmp_path / "model")
        assert load_params(path).config == tiny_mlp

    def test_config_mismatch_raises(self, tiny_conv, tmp_path):
        path = save_params(init_params(tiny_conv), tmp_path / "model")
        with pytest.raises(DataError):
            load_params(path, tiny_conv.model_copy(update={"embedding_dim": 6}))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

"""
Unit tests for experiment preparation and the episodic trainer
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from autodiff import Tensor
from evaluation.data import Normalizer, prepare_experiment
from evaluation.trainer import EpisodicTrainer, train
from features.dataset import PatchPool
from models.embedding_net import load_params
from utils.errors import ConfigError, DataError, NumericError


class TestPrepareExperiment:
    """Trees, pools, split and normalisation"""

    def test_split_pools_are_disjoint_and_normalised(self, vector_config):
        data = prepare_experiment(vector_config())
        assert set(data.train_pool.classes) == set(data.split.train)
        assert set(data.eval_pool.classes) == set(data.split.eval)
        assert not set(data.train_pool.classes) & set(data.eval_pool.classes)
        np.testing.assert_allclose(data.train_pool.features.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(data.train_pool.features.std(axis=0), 1.0, atol=1e-10)

    def test_tree_is_shortened_to_the_configured_height(self, vector_config):
        data = prepare_experiment(vector_config(**{"tree.height": 1}))
        assert data.tree.height == 1
        assert data.source_tree.height == 2
        assert data.tree != data.source_tree

    def test_shortened_model_measures_severity_on_the_source_tree(self, vector_config):
        data = prepare_experiment(vector_config(**{"tree.height": 1}))
        assert data.severity_tree == data.source_tree

    def test_random_tree_measures_severity_on_its_own_tree(self, vector_config):
        data = prepare_experiment(vector_config(**{"tree.height": 2, "tree.swap_seed": 4}))
        assert data.tree != data.source_tree
        assert data.severity_tree is data.tree

    def test_reference_tree_overrides_severity(self, vector_config):
        data = prepare_experiment(vector_config(**{"tree.swap_seed": 4, "tree.reference": "synthetic"}))
        assert data.severity_tree == data.source_tree

    def test_flat_model_measures_severity_on_the_source_tree(self, vector_config):
        data = prepare_experiment(vector_config(**{"tree.height": 0}))
        assert data.tree.flat
        assert data.severity_tree.height == 2

    def test_height_above_the_tree_raises(self, vector_config):
        with pytest.raises(ConfigError):
            prepare_experiment(vector_config(**{"tree.height": 3}))

    def test_input_shape_mismatch_raises(self, vector_config):
        with pytest.raises(ConfigError):
            prepare_experiment(vector_config(**{"backbone.input_shape": [13]}))

    def test_labels_outside_the_tree_raise(self, vector_config):
        pool = PatchPool.from_arrays(np.zeros((4, 12)), ["synth_cello", "synth_cello", "theremin", "theremin"])
        with pytest.raises(DataError):
            prepare_experiment(vector_config(), pool=pool)

    def test_identity_normalizer(self):
        features = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(Normalizer.identity().apply(features), features)

    def test_patch_normalizer_is_global(self):
        features = np.random.default_rng(0).normal(3.0, 2.0, size=(10, 4, 5))
        normalizer = Normalizer.fit(features)
        assert np.ndim(normalizer.mean) == 0
        assert normalizer.apply(features).mean() == pytest.approx(0.0, abs=1e-12)


class TestEpisodicTrainer:
    """Training loop, checkpoints and logs"""

    def test_short_run_writes_every_artifact(self, vector_config, tmp_path):
        config = vector_config()
        result = train(config, output_dir=tmp_path / "run")

        assert result.steps == 10
        assert len(result.history['loss']) <= 10
        assert result.history['val_step'] == [0, 5, 10]
        assert all(np.isfinite(result.history['loss']))
        assert all(len(levels) == 2 for levels in result.history['level_losses'])

        run_dir = tmp_path / "run"
        for name in ("config.yaml", "split.json", "tree.json", "training_history.json", "training_log.csv"):
            assert (run_dir / name).exists(), name
        assert result.best_checkpoint.exists()
        assert result.final_checkpoint.exists()
        assert (run_dir / "checkpoints" / "final_model.bin").exists()

        log = pd.read_csv(run_dir / "training_log.csv")
        assert {'step', 'loss', 'ce_level_0', 'ce_level_1', 'val_loss'} <= set(log.columns)
        assert 'ce_level_2' not in log.columns
        history = json.loads((run_dir / "training_history.json").read_text())
        assert history['loss'] == result.history['loss']

    def test_checkpoints_restore(self, vector_config, tmp_path):
        config = vector_config()
        result = train(config, output_dir=tmp_path / "run")
        theta = load_params(result.final_checkpoint, config.backbone)
        assert theta.n_parameters == 12 * 16 + 16 + 16 * 8 + 8

    def test_same_seeds_same_losses(self, vector_config, tmp_path):
        config = vector_config(**{"training.max_steps": 6})
        data = prepare_experiment(config)
        a = EpisodicTrainer(config, data).fit(tmp_path / "a")
        b = EpisodicTrainer(config, data).fit(tmp_path / "b")
        assert a.history['loss'] == b.history['loss']

    def test_height_zero_matches_the_baseline_loss(self, vector_config, tmp_path):
        flat = vector_config(**{"tree.height": 0, "training.max_steps": 8})
        baseline = flat.updated(**{"loss.kind": "baseline"})
        hierarchical = EpisodicTrainer(flat, prepare_experiment(flat)).fit(tmp_path / "h0")
        reference = EpisodicTrainer(baseline, prepare_experiment(baseline)).fit(tmp_path / "baseline")
        assert hierarchical.history['loss'] == reference.history['loss']
        assert hierarchical.history['val_loss'] == reference.history['val_loss']

    def test_flat_bce_reports_level_losses(self, vector_config, tmp_path):
        config = vector_config(**{"loss.kind": "flat_bce", "training.max_steps": 3})
        result = EpisodicTrainer(config, prepare_experiment(config)).fit(tmp_path / "bce")
        assert all(len(levels) == 2 for levels in result.history['level_losses'])
        assert all(np.isfinite(result.history['loss']))

    def test_validation_loss_decreases(self, vector_config, tmp_path):
        config = vector_config(**{
            "training.way": 2,
            "training.shots": 5,
            "training.queries": 5,
            "training.max_steps": 80,
            "training.validation_interval": 20,
            "training.validation_episodes": 10,
            "data.vectors.noise": 2.0,
        })
        result = EpisodicTrainer(config, prepare_experiment(config)).fit(tmp_path / "toy")
        assert result.history['val_loss'][-1] < result.history['val_loss'][0]
        assert result.best_step > 0

    def test_early_stopping(self, vector_config, tmp_path, monkeypatch):
        config = vector_config(**{
            "training.max_steps": 20,
            "training.validation_interval": 2,
            "training.patience": 4,
        })
        trainer = EpisodicTrainer(config, prepare_experiment(config))
        monkeypatch.setattr(trainer, "validate", lambda: 1.0)
        result = trainer.fit(tmp_path / "stop")
        assert result.early_stopped
        assert result.steps == 4
        assert result.best_step == 0
        assert result.history['val_step'] == [0, 2, 4]

    def test_non_finite_loss_raises_with_step(self, vector_config, monkeypatch):
        config = vector_config()
        trainer = EpisodicTrainer(config, prepare_experiment(config))
        monkeypatch.setattr(
            trainer, "episode_loss",
            lambda *args: (Tensor(np.array(np.nan), requires_grad=True), np.array([np.nan])),
        )
        with pytest.raises(NumericError) as info:
            trainer.train_step(7)
        assert info.value.step == 7


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

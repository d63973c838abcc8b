"""
Shared fixtures: small vector-data experiments that train in seconds
"""

import sys
from pathlib import Path

import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from evaluation.config import CONFIG_DIR, load_config


@pytest.fixture
def vector_config(tmp_path):
    """
    Factory for the desk config switched to Gaussian vectors and a small MLP

    Keyword arguments are dotted-path overrides applied on top.
    """

    def build(**changes):
        settings = {
            "name": "tiny",
            "output_dir": str(tmp_path / "results"),
            "data.source": "synthetic_vectors",
            "data.cache_dir": None,
            "data.vectors.dim": 12,
            "data.vectors.per_class": 24,
            "data.vectors.noise": 1.5,
            "backbone.input_shape": [12],
            "backbone.hidden_dims": [16],
            "backbone.embedding_dim": 8,
            "training.way": 4,
            "training.shots": 2,
            "training.queries": 3,
            "training.learning_rate": 0.01,
            "training.max_steps": 10,
            "training.patience": 100,
            "training.validation_interval": 5,
            "training.validation_episodes": 2,
            "evaluation.episodes": 6,
            "evaluation.way": 4,
            "evaluation.shots": [3],
            "evaluation.queries": 5,
            "evaluation.workers": 2,
            "ablation.alphas": [0.0, 1.0],
            "ablation.shots": [1, 3],
            "ablation.random_trees": 2,
        }
        settings.update(changes)
        return load_config(CONFIG_DIR / "synthetic_desk.yaml").updated(**settings)

    return build

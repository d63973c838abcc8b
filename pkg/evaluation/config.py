"""
Experiment Configuration
YAML files validated into a pydantic model; any field can be overridden from the CLI
"""

import copy
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from features.dataset import FeatureKind
from models.embedding_net import BackboneConfig
from models.protonet import DistanceKind, LossKind
from utils.errors import ConfigError
from utils.logging_setup import DEFAULT_FORMAT

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_CONFIG = CONFIG_DIR / "config.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSource(str, Enum):
    SYNTHETIC_AUDIO = "synthetic_audio"
    AUDIO_DIR = "audio_dir"
    SYNTHETIC_VECTORS = "synthetic_vectors"


class TreeSettings(_Section):
    source: str = "hornbostel_sachs"
    height: Optional[int] = Field(default=None, ge=0)
    swap_seed: Optional[int] = None
    swaps_per_leaf: int = Field(default=1000, ge=0)
    reference: Optional[str] = None
    family_level: int = Field(default=1, ge=1)


class LossSettings(_Section):
    kind: LossKind = LossKind.HIERARCHICAL
    alpha: float = 1.0
    distance: DistanceKind = DistanceKind.SQUARED_EUCLIDEAN


class VectorSettings(_Section):
    dim: int = Field(default=32, gt=0)
    per_class: int = Field(default=60, gt=0)
    seed: int = 0
    leaf_scale: float = Field(default=1.0, gt=0)
    level_growth: float = Field(default=1.5, gt=0)
    noise: float = Field(default=1.0, gt=0)


class DataSettings(_Section):
    source: DataSource = DataSource.SYNTHETIC_AUDIO
    manifest: Optional[str] = None
    audio_dir: Optional[str] = None
    cache_dir: Optional[str] = None
    features: FeatureKind = FeatureKind.LOGMEL
    silence_threshold_db: float = -60.0
    normalize: bool = True
    workers: int = Field(default=4, gt=0)
    vectors: VectorSettings = Field(default_factory=VectorSettings)


class SplitSettings(_Section):
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = 0
    plan: Optional[str] = None


class TrainingSettings(_Section):
    way: int = Field(default=12, gt=0)
    shots: int = Field(default=4, gt=0)
    queries: int = Field(default=12, gt=0)
    learning_rate: float = Field(default=0.03, gt=0)
    max_steps: int = Field(default=60000, gt=0)
    patience: int = Field(default=4500, gt=0)
    validation_interval: int = Field(default=150, gt=0)
    validation_episodes: int = Field(default=20, gt=0)
    episode_seed: int = 0
    validation_seed: int = 10_000_000


class EvaluationSettings(_Section):
    episodes: int = Field(default=100, gt=0)
    way: int = Field(default=12, gt=0)
    shots: List[int] = Field(default_factory=lambda: [4])
    queries: int = Field(default=120, gt=0)
    seed: int = 1_000_000
    workers: int = Field(default=4, gt=0)

    @field_validator("shots")
    @classmethod
    def _positive_shots(cls, value: List[int]) -> List[int]:
        if not value or any(n <= 0 for n in value):
            raise ValueError("evaluation shots must be a non-empty list of positive integers")
        return value


class AblationSettings(_Section):
    heights: Optional[List[int]] = None
    alphas: List[float] = Field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    shots: List[int] = Field(default_factory=lambda: [1, 4, 8, 16])
    random_trees: int = Field(default=10, gt=0)
    random_tree_seed: int = 0


class LoggingSettings(_Section):
    level: str = "INFO"
    format: str = DEFAULT_FORMAT
    file: Optional[str] = None


class ExperimentConfig(_Section):
    """Complete description of one training / evaluation run"""
    name: str = "experiment"
    output_dir: str = "results"
    tree: TreeSettings = Field(default_factory=TreeSettings)
    loss: LossSettings = Field(default_factory=LossSettings)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    data: DataSettings = Field(default_factory=DataSettings)
    split: SplitSettings = Field(default_factory=SplitSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    ablation: AblationSettings = Field(default_factory=AblationSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def updated(self, **changes: Any) -> "ExperimentConfig":
        """Copy with dotted-path changes, e.g. updated(**{"loss.alpha": 0.5})"""
        return apply_overrides(self, [(key, value) for key, value in changes.items()])

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")
        return path


def _validate(document: Dict[str, Any], origin: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration ({origin}):\n{exc}") from exc


def load_config(path: Union[str, Path, None] = None) -> ExperimentConfig:
    """
    Load a YAML (or JSON) experiment config; None loads config/config.yaml
    """
    path = Path(path) if path is not None else DEFAULT_CONFIG
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    config = _validate(document, str(path))
    logger.debug(f"Loaded config '{config.name}' from {path}")
    return config


def parse_override(text: str):
    """'section.field=value' -> ('section.field', parsed YAML value)"""
    if "=" not in text:
        raise ConfigError(f"override '{text}' must look like section.field=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of override '{text}': {exc}") from exc
    return key.strip(), value


def apply_overrides(config: ExperimentConfig, overrides: Sequence) -> ExperimentConfig:
    """
    Apply dotted-path overrides and re-validate

    Args:
        overrides: 'a.b=value' strings or (path, value) pairs
    """
    document = copy.deepcopy(config.to_dict())
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        cursor = document
        for part in parts[:-1]:
            if not isinstance(cursor.get(part), dict):
                raise ConfigError(f"unknown config section '{part}' in override '{key}'")
            cursor = cursor[part]
        if parts[-1] not in cursor:
            raise ConfigError(f"unknown config field '{key}'")
        cursor[parts[-1]] = value
    return _validate(document, "overrides")

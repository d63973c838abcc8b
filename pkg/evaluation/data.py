"""
Experiment data preparation
Class trees, the feature pool, the family-balanced split and normalisation
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from sklearn.preprocessing import StandardScaler

from episodes.split import SplitPlan, build_split
from evaluation.config import DataSource, ExperimentConfig
from features.dataset import FeatureKind, PatchPool, build_synthetic_pool, load_audio_directory
from features.synth import gaussian_hierarchy_vectors, load_manifest
from taxonomy.class_tree import ClassTree, family_map, load_tree, random_swap_tree, shorten_to_height
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass
class Normalizer:
    """
    Standardisation fitted on the training split

    Vectors use a per-feature StandardScaler; 2-D patches a single global mean
    and standard deviation.
    """
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Normalizer":
        if features.ndim == 2:
            scaler = StandardScaler().fit(features)
            return cls(mean=scaler.mean_.copy(), scale=scaler.scale_.copy())
        std = float(features.std())
        return cls(mean=np.array(float(features.mean())), scale=np.array(std if std > 0 else 1.0))

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(mean=np.array(0.0), scale=np.array(1.0))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale

    def to_dict(self) -> Dict:
        return {"mean": np.asarray(self.mean).tolist(), "scale": np.asarray(self.scale).tolist()}


@dataclass
class ExperimentData:
    """Everything an experiment needs besides the model parameters"""
    config: ExperimentConfig
    source_tree: ClassTree
    tree: ClassTree
    severity_tree: ClassTree
    pool: PatchPool
    split: SplitPlan
    train_pool: PatchPool
    eval_pool: PatchPool
    normalizer: Normalizer

    def describe(self) -> str:
        return (
            f"{self.tree.describe()}, {len(self.pool)} patches, "
            f"{len(self.split.train)} train / {len(self.split.eval)} eval leaves"
        )


def prepare_tree(config: ExperimentConfig, source_tree: Optional[ClassTree] = None) -> ClassTree:
    """Load the source tree, optionally permute its leaves, then shorten it"""
    tree = source_tree if source_tree is not None else load_tree(config.tree.source)
    if config.tree.swap_seed is not None:
        tree = random_swap_tree(tree, config.tree.swap_seed, config.tree.swaps_per_leaf)
    height = tree.height if config.tree.height is None else config.tree.height
    if height > tree.height:
        raise ConfigError(f"tree.height {height} exceeds the height {tree.height} of '{config.tree.source}'")
    return shorten_to_height(tree, height)


def load_pool(config: ExperimentConfig, source_tree: ClassTree) -> PatchPool:
    """Build the labeled feature pool named by config.data"""
    data = config.data
    if data.source == DataSource.SYNTHETIC_VECTORS:
        vectors = data.vectors
        features, labels = gaussian_hierarchy_vectors(
            source_tree,
            per_class=vectors.per_class,
            dim=vectors.dim,
            seed=vectors.seed,
            leaf_scale=vectors.leaf_scale,
            level_growth=vectors.level_growth,
            noise=vectors.noise,
        )
        return PatchPool.from_arrays(features, labels)

    if data.source == DataSource.SYNTHETIC_AUDIO:
        pool = build_synthetic_pool(
            load_manifest(data.manifest),
            cache_dir=data.cache_dir,
            threshold_db=data.silence_threshold_db,
            workers=data.workers,
        )
    else:
        if not data.audio_dir:
            raise ConfigError("data.audio_dir is required when data.source is audio_dir")
        pool = load_audio_directory(
            data.audio_dir,
            cache_dir=data.cache_dir,
            threshold_db=data.silence_threshold_db,
            workers=data.workers,
        )
    return pool.summarized() if data.features == FeatureKind.SUMMARY else pool


def prepare_experiment(config: ExperimentConfig, pool: Optional[PatchPool] = None) -> ExperimentData:
    """
    Resolve trees, data, split and normalisation for a config

    Args:
        config: Experiment configuration
        pool: Pre-built feature pool, reused across ablation variants

    Raises:
        ConfigError: Tree height or backbone input shape inconsistent with the data
        DataError: Pool labels missing from the tree, or an unusable split
    """
    source_tree = load_tree(config.tree.source)
    tree = prepare_tree(config, source_tree)
    if config.tree.reference:
        severity_tree = load_tree(config.tree.reference)
    elif config.tree.swap_seed is not None:
        severity_tree = tree
    else:
        severity_tree = source_tree

    if pool is None:
        pool = load_pool(config, source_tree)
    for name, t in (("model", tree), ("severity", severity_tree)):
        missing = sorted(set(pool.classes) - set(t.leaf_index))
        if missing:
            raise DataError(f"pool labels {missing[:5]} are not leaves of the {name} tree")

    if config.split.plan:
        split = SplitPlan.load(config.split.plan)
        unknown = sorted((set(split.train) | set(split.eval)) - set(pool.classes))
        if unknown:
            raise DataError(f"split plan names leaves with no data: {unknown[:5]}")
    else:
        if config.tree.family_level > source_tree.height:
            raise ConfigError(
                f"tree.family_level {config.tree.family_level} exceeds the height {source_tree.height} of the source tree"
            )
        families = family_map(source_tree, config.tree.family_level, leaves=pool.classes)
        split = build_split(families, config.split.train_fraction, config.split.seed)

    train_pool = pool.subset(split.train)
    eval_pool = pool.subset(split.eval)
    normalizer = Normalizer.fit(train_pool.features) if config.data.normalize else Normalizer.identity()
    train_pool = train_pool.with_features(normalizer.apply(train_pool.features))
    eval_pool = eval_pool.with_features(normalizer.apply(eval_pool.features))

    if list(config.backbone.input_shape) != pool.feature_shape:
        raise ConfigError(
            f"backbone.input_shape {list(config.backbone.input_shape)} does not match "
            f"the feature shape {pool.feature_shape} of the data"
        )

    experiment = ExperimentData(
        config=config,
        source_tree=source_tree,
        tree=tree,
        severity_tree=severity_tree,
        pool=pool,
        split=split,
        train_pool=train_pool,
        eval_pool=eval_pool,
        normalizer=normalizer,
    )
    logger.info(f"Prepared experiment '{config.name}': {experiment.describe()}")
    return experiment

"""
Embedding backbone and prototypical network core
"""

from models.embedding_net import (
    BackboneConfig,
    BackboneKind,
    EmbedMode,
    ParameterSet,
    embed,
    init_params,
    load_params,
    save_params,
)
from models.protonet import (
    DistanceKind,
    LevelPrototypes,
    LossKind,
    PrototypeHierarchy,
    aggregate_metaprototypes,
    build_hierarchy,
    classify,
    classify_batch,
    compute_prototypes,
    episode_flat_bce_loss,
    episode_hierarchical_loss,
    flat_bce_loss,
    hierarchical_loss,
    level_distribution,
    prototypical_loss,
    weighted_level_sum,
)

__all__ = [
    'BackboneConfig',
    'BackboneKind',
    'DistanceKind',
    'EmbedMode',
    'LevelPrototypes',
    'LossKind',
    'ParameterSet',
    'PrototypeHierarchy',
    'aggregate_metaprototypes',
    'build_hierarchy',
    'classify',
    'classify_batch',
    'compute_prototypes',
    'embed',
    'episode_flat_bce_loss',
    'episode_hierarchical_loss',
    'flat_bce_loss',
    'hierarchical_loss',
    'init_params',
    'level_distribution',
    'load_params',
    'prototypical_loss',
    'save_params',
    'weighted_level_sum',
]

"""
Utilities Package
"""

from utils.errors import (
    ConfigError,
    DataError,
    EpisodeError,
    GraphError,
    HierarchicalFewShotError,
    NumericError,
    PrototypeError,
    ShapeError,
    StatisticsError,
    TreeError,
)
from utils.logging_setup import configure_logging

__all__ = [
    'ConfigError',
    'DataError',
    'EpisodeError',
    'GraphError',
    'HierarchicalFewShotError',
    'NumericError',
    'PrototypeError',
    'ShapeError',
    'StatisticsError',
    'TreeError',
    'configure_logging',
]

"""
Dataset splitting and episodic sampling
"""

from episodes.sampler import Episode, check_disjoint, episode_seeds, episode_stream, sample_episode
from episodes.split import SplitPlan, build_split

__all__ = [
    'Episode',
    'SplitPlan',
    'build_split',
    'check_disjoint',
    'episode_seeds',
    'episode_stream',
    'sample_episode',
]

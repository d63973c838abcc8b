"""
Episode Sampler
K-way, N-shot support sets with M queries per class, deterministic per seed
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from features.dataset import PatchPool
from utils.errors import ConfigError, EpisodeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Episode:
    """
    Row indices into a PatchPool

    support_idx and query_idx are [K, N] and [K, M]; row k belongs to classes[k].
    """
    classes: Tuple[str, ...]
    support_idx: np.ndarray
    query_idx: np.ndarray
    seed: int

    @property
    def way(self) -> int:
        return len(self.classes)

    @property
    def shots(self) -> int:
        return self.support_idx.shape[1]

    @property
    def queries(self) -> int:
        return self.query_idx.shape[1]

    def support_labels(self) -> List[str]:
        return [label for label in self.classes for _ in range(self.shots)]

    def query_labels(self) -> List[str]:
        return [label for label in self.classes for _ in range(self.queries)]

    def support_rows(self) -> np.ndarray:
        return self.support_idx.reshape(-1)

    def query_rows(self) -> np.ndarray:
        return self.query_idx.reshape(-1)


def _check_counts(way: int, shots: int, queries: int):
    if way < 1 or shots < 1 or queries < 1:
        raise ConfigError(f"K, N and M must be positive, got K={way} N={shots} M={queries}")


def sample_episode(pool: PatchPool, way: int = 12, shots: int = 4, queries: int = 12, seed: int = 0) -> Episode:
    """
    Draw K classes uniformly without replacement, then N+M patches per class

    The first N patches of each class form the support set and the rest the
    query set.

    Raises:
        EpisodeError: Fewer than K classes, or a class with fewer than N+M patches
    """
    _check_counts(way, shots, queries)
    needed = shots + queries
    counts = pool.counts()
    for label, count in sorted(counts.items()):
        if count < needed:
            raise EpisodeError(
                f"class '{label}' has {count} patches, an episode needs N+M={needed}", label=label
            )
    if len(counts) < way:
        raise EpisodeError(f"pool has {len(counts)} classes, an episode needs K={way}")

    rng = np.random.default_rng(seed)
    classes = sorted(counts)
    chosen = [classes[i] for i in rng.choice(len(classes), size=way, replace=False)]

    support, query = [], []
    for label in chosen:
        rows = pool.indices_of(label)
        picked = rows[rng.choice(rows.size, size=needed, replace=False)]
        support.append(picked[:shots])
        query.append(picked[shots:])

    return Episode(classes=tuple(chosen), support_idx=np.stack(support), query_idx=np.stack(query), seed=int(seed))


def episode_stream(
    pool: PatchPool,
    count: int,
    base_seed: int,
    way: int = 12,
    shots: int = 4,
    queries: int = 12,
) -> Iterator[Episode]:
    """Episode i is sample_episode(..., seed=base_seed + i)"""
    if count < 0:
        raise ConfigError(f"episode count must be non-negative, got {count}")
    for i in range(count):
        yield sample_episode(pool, way=way, shots=shots, queries=queries, seed=base_seed + i)


def episode_seeds(count: int, base_seed: int) -> List[int]:
    return [base_seed + i for i in range(count)]


def check_disjoint(episode: Episode, forbidden: Optional[Sequence[str]] = None) -> bool:
    """True when support and query share no row and no class is in forbidden"""
    if np.intersect1d(episode.support_rows(), episode.query_rows()).size:
        return False
    return not (forbidden and set(episode.classes) & set(forbidden))

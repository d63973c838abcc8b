"""
Family-balanced train/evaluation split of the leaf classes
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np

from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train and evaluation leaf sets with the family of every leaf"""
    train: Tuple[str, ...]
    eval: Tuple[str, ...]
    families: Dict[str, str] = field(compare=False)
    seed: int = 0
    train_fraction: float = 0.7

    def __post_init__(self):
        overlap = set(self.train) & set(self.eval)
        if overlap:
            raise DataError(f"leaves {sorted(overlap)} are on both sides of the split")

    @property
    def assignment(self) -> Dict[str, str]:
        out = {leaf: TRAIN for leaf in self.train}
        out.update({leaf: EVAL for leaf in self.eval})
        return dict(sorted(out.items()))

    def family_counts(self) -> Dict[str, Tuple[int, int]]:
        """family -> (train leaves, eval leaves)"""
        counts: Dict[str, List[int]] = {}
        for leaf, side in self.assignment.items():
            pair = counts.setdefault(self.families[leaf], [0, 0])
            pair[0 if side == TRAIN else 1] += 1
        return {family: (a, b) for family, (a, b) in sorted(counts.items())}

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "assignment": self.assignment,
            "families": dict(sorted(self.families.items())),
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        logger.info(f"Split plan saved to {path}")
        return path

    @classmethod
    def from_dict(cls, document: Mapping) -> "SplitPlan":
        try:
            assignment = document["assignment"]
            return cls(
                train=tuple(sorted(leaf for leaf, side in assignment.items() if side == TRAIN)),
                eval=tuple(sorted(leaf for leaf, side in assignment.items() if side == EVAL)),
                families=dict(document["families"]),
                seed=int(document.get("seed", 0)),
                train_fraction=float(document.get("train_fraction", 0.7)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"malformed split plan: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SplitPlan":
        path = Path(path)
        if not path.exists():
            raise DataError(f"split plan not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5 + 1e-9))


def build_split(families: Mapping[str, str], train_fraction: float = 0.7, seed: int = 0) -> SplitPlan:
    """
    Split leaves so every family contributes to both sides in proportion

    The overall train count is round-half-up(train_fraction * leaves). Each family
    first receives floor(train_fraction * size) train leaves, clamped to keep at
    least one leaf per side; the remaining train slots go to the families with the
    largest fractional remainders, ties broken by a seeded shuffle.

    Args:
        families: leaf name -> family name
        train_fraction: Share of leaves used for training, in (0, 1)
        seed: Controls tie breaking and which leaves of a family are chosen

    Returns:
        SplitPlan
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")

    members: Dict[str, List[str]] = {}
    for leaf, family in families.items():
        members.setdefault(family, []).append(leaf)
    members = {family: sorted(leaves) for family, leaves in sorted(members.items())}
    small = [family for family, leaves in members.items() if len(leaves) < 2]
    if small:
        raise DataError(f"families {small} have fewer than 2 leaves and cannot be split")

    rng = np.random.default_rng(seed)
    names = list(members)
    sizes = np.array([len(members[f]) for f in names])
    quotas = train_fraction * sizes
    counts = np.clip(np.floor(quotas + 1e-9).astype(int), 1, sizes - 1)
    remainders = quotas - counts
    target = int(np.clip(_round_half_up(train_fraction * sizes.sum()), len(names), int((sizes - 1).sum())))

    tie_break = rng.permutation(len(names))
    order = sorted(range(len(names)), key=lambda i: (-remainders[i], tie_break[i]))
    while counts.sum() < target:
        for i in order:
            if counts.sum() >= target:
                break
            if counts[i] < sizes[i] - 1:
                counts[i] += 1
    while counts.sum() > target:
        for i in reversed(order):
            if counts.sum() <= target:
                break
            if counts[i] > 1:
                counts[i] -= 1

    train: List[str] = []
    evaluation: List[str] = []
    for family, count in zip(names, counts):
        shuffled = [members[family][j] for j in rng.permutation(len(members[family]))]
        train.extend(shuffled[:count])
        evaluation.extend(shuffled[count:])

    plan = SplitPlan(
        train=tuple(sorted(train)),
        eval=tuple(sorted(evaluation)),
        families=dict(families),
        seed=seed,
        train_fraction=train_fraction,
    )
    logger.info(f"Split {len(families)} leaves: {len(plan.train)} train / {len(plan.eval)} eval")
    return plan

"""
Prototypical network core
Prototypes, metaprototypes over the class tree, per-level distributions and losses
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from taxonomy.class_tree import ClassTree, level_groups
from utils.errors import PrototypeError, ShapeError, TreeError

logger = logging.getLogger(__name__)

EUCLIDEAN_EPS = 1e-12


class DistanceKind(str, Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    EUCLIDEAN = "euclidean"


class LossKind(str, Enum):
    HIERARCHICAL = "hierarchical"
    FLAT_BCE = "flat_bce"
    BASELINE = "baseline"


@dataclass(frozen=True)
class LevelPrototypes:
    """Prototype vectors for the nodes of one tree level, rows ordered by node id"""
    level: int
    node_ids: Tuple[int, ...]
    vectors: Tensor

    def __post_init__(self):
        if list(self.node_ids) != sorted(set(self.node_ids)):
            raise PrototypeError(f"level {self.level} node ids must be unique and ascending")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.node_ids):
            raise PrototypeError(
                f"level {self.level}: {len(self.node_ids)} nodes but vectors of shape {list(self.vectors.shape)}"
            )

    def index_of(self, node_id: int) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise PrototypeError(f"node {node_id} has no prototype at level {self.level}") from None

    def as_dict(self) -> Dict[int, np.ndarray]:
        return {node: self.vectors.data[i].copy() for i, node in enumerate(self.node_ids)}


@dataclass(frozen=True)
class PrototypeHierarchy:
    """Prototypes for levels 0..H of the tree the episode was built against"""
    levels: Tuple[LevelPrototypes, ...]
    tree: ClassTree
    distance: DistanceKind = DistanceKind.SQUARED_EUCLIDEAN

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    @property
    def classes(self) -> Tuple[int, ...]:
        return self.levels[0].node_ids

    def level(self, h: int) -> LevelPrototypes:
        return self.levels[h]


# ----------------------------------------------------------------- prototypes


def _averaging_matrix(groups: Sequence[Sequence[int]], n_columns: int) -> np.ndarray:
    matrix = np.zeros((len(groups), n_columns))
    for row, members in enumerate(groups):
        matrix[row, list(members)] = 1.0 / len(members)
    return matrix


def compute_prototypes(
    support_embeddings,
    support_labels: Sequence[int],
    classes: Optional[Sequence[int]] = None,
) -> LevelPrototypes:
    """
    Class means of the support embeddings

    Args:
        support_embeddings: Tensor [S, D]
        support_labels: S leaf ids
        classes: Expected leaf ids; defaults to the distinct labels

    Returns:
        Level-0 prototypes keyed by ascending leaf id
    """
    support_embeddings = as_tensor(support_embeddings)
    labels = [int(label) for label in support_labels]
    if support_embeddings.ndim != 2 or support_embeddings.shape[0] != len(labels):
        raise PrototypeError(
            f"{len(labels)} support labels for embeddings of shape {list(support_embeddings.shape)}"
        )

    keys = sorted(set(labels) if classes is None else {int(c) for c in classes})
    if not keys:
        raise PrototypeError("no support classes")
    members: Dict[int, List[int]] = {key: [] for key in keys}
    for row, label in enumerate(labels):
        if label not in members:
            raise PrototypeError(f"support label {label} is not one of the episode classes")
        members[label].append(row)
    empty = [key for key, rows in members.items() if not rows]
    if empty:
        raise PrototypeError(f"classes {empty} have no support embeddings")

    matrix = _averaging_matrix([members[key] for key in keys], len(labels))
    return LevelPrototypes(level=0, node_ids=tuple(keys), vectors=ops.matmul(Tensor(matrix), support_embeddings))


def aggregate_metaprototypes(level_prototypes: LevelPrototypes, tree: ClassTree, h: int) -> LevelPrototypes:
    """
    Level-(h+1) metaprototypes as unweighted means of the present children

    Args:
        level_prototypes: Prototypes of level-h nodes
        tree: Class tree the nodes belong to
        h: Level of the input prototypes, 0 <= h < H
    """
    if h != level_prototypes.level:
        raise PrototypeError(f"prototypes are at level {level_prototypes.level}, not {h}")
    if not 0 <= h < tree.height:
        raise PrototypeError(f"cannot aggregate level {h} of a tree of height {tree.height}")

    present_leaves = set()
    for node in level_prototypes.node_ids:
        try:
            if tree.level(node) != h:
                raise PrototypeError(f"node {node} sits at level {tree.level(node)}, not {h}")
        except TreeError as exc:
            raise PrototypeError(str(exc)) from exc
        present_leaves.update(tree.leaves_under(node))

    groups = level_groups(tree, h + 1, present_leaves)
    parents = tuple(groups)
    columns = [[level_prototypes.index_of(child) for child in sorted(groups[parent])] for parent in parents]
    matrix = _averaging_matrix(columns, len(level_prototypes.node_ids))
    return LevelPrototypes(level=h + 1, node_ids=parents, vectors=ops.matmul(Tensor(matrix), level_prototypes.vectors))


def build_hierarchy(
    support_embeddings,
    support_labels: Sequence[int],
    tree: ClassTree,
    distance: Union[DistanceKind, str] = DistanceKind.SQUARED_EUCLIDEAN,
    classes: Optional[Sequence[int]] = None,
) -> PrototypeHierarchy:
    """Prototypes at level 0 plus metaprototypes for every family level up to H"""
    levels = [compute_prototypes(support_embeddings, support_labels, classes)]
    for leaf in levels[0].node_ids:
        tree.resolve_leaf(leaf)
    for h in range(tree.height):
        levels.append(aggregate_metaprototypes(levels[-1], tree, h))

    hierarchy = PrototypeHierarchy(levels=tuple(levels), tree=tree, distance=DistanceKind(distance))
    for prototypes in hierarchy.levels:
        if not np.all(np.isfinite(prototypes.vectors.data)):
            raise PrototypeError(f"non-finite prototype at level {prototypes.level}")
    return hierarchy


# ----------------------------------------------------------- distances / probs


def pairwise_distances(
    query_embeddings,
    prototypes: LevelPrototypes,
    distance: Union[DistanceKind, str] = DistanceKind.SQUARED_EUCLIDEAN,
) -> Tensor:
    """Distances [Q, P] between every query and every prototype of a level"""
    query_embeddings = as_tensor(query_embeddings)
    if query_embeddings.ndim != 2 or query_embeddings.shape[1] != prototypes.vectors.shape[1]:
        raise ShapeError("pairwise_distances", query_embeddings.shape, prototypes.vectors.shape)
    squared = ops.squared_difference_sum(query_embeddings, prototypes.vectors)
    if DistanceKind(distance) == DistanceKind.EUCLIDEAN:
        return ops.sqrt(ops.shift(squared, EUCLIDEAN_EPS))
    return squared


def level_logits(query_embeddings, prototypes: LevelPrototypes, distance=DistanceKind.SQUARED_EUCLIDEAN) -> Tensor:
    return ops.scale(pairwise_distances(query_embeddings, prototypes, distance), -1.0)


def level_distribution(
    query_embedding,
    prototypes: LevelPrototypes,
    distance: Union[DistanceKind, str] = DistanceKind.SQUARED_EUCLIDEAN,
) -> np.ndarray:
    """
    Softmax over negated distances to the level's prototypes

    A single D-vector yields a probability vector ordered like prototypes.node_ids;
    a [Q, D] batch yields one row per query.
    """
    values = query_embedding.data if isinstance(query_embedding, Tensor) else np.asarray(query_embedding, dtype=np.float64)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    logits = level_logits(Tensor(batch), prototypes, distance).data
    probabilities = ops.softmax(logits, axis=1)
    return probabilities[0] if single else probabilities


def level_targets(tree: ClassTree, labels: Sequence[int], prototypes: LevelPrototypes) -> np.ndarray:
    """Column index of each label's level-h ancestor"""
    h = prototypes.level
    return np.array([prototypes.index_of(tree.chain(label)[h]) for label in labels], dtype=np.int64)


# ---------------------------------------------------------------------- losses


def level_weights(alpha: float, n_levels: int) -> np.ndarray:
    """e^(-alpha * h) for h = 0..n_levels-1"""
    return np.exp(-float(alpha) * np.arange(n_levels))


def weighted_level_sum(level_terms: Sequence, alpha: float) -> Tensor:
    """Exponentially decaying sum of per-level loss terms"""
    if not level_terms:
        raise PrototypeError("no level terms to combine")
    weights = level_weights(alpha, len(level_terms))
    total = None
    for term, weight in zip(level_terms, weights):
        scaled = ops.scale(as_tensor(term), weight)
        total = scaled if total is None else ops.add(total, scaled)
    return total


def hierarchical_loss(
    per_level_logits: Sequence[Tensor],
    target_columns: Sequence[Sequence[int]],
    alpha: float,
) -> Tuple[Tensor, np.ndarray]:
    """
    Sum over levels of e^(-alpha*h) times the level's softmax cross-entropy

    Args:
        per_level_logits: One [Q, P_h] logit matrix per level 0..H
        target_columns: Per query, the column of its ancestor at each level 0..H
        alpha: Decay rate; 0 weighs all levels equally

    Returns:
        Tuple of (total loss, CE_h for each level)
    """
    n_levels = len(per_level_logits)
    paths = np.asarray(target_columns, dtype=np.int64)
    if paths.ndim != 2 or paths.shape[1] != n_levels:
        raise PrototypeError(
            f"ground-truth paths of shape {list(paths.shape)} do not cover {n_levels} levels"
        )
    terms = [ops.softmax_with_cross_entropy(logits, paths[:, h]) for h, logits in enumerate(per_level_logits)]
    total = weighted_level_sum(terms, alpha)
    return total, np.array([term.item() for term in terms])


def episode_hierarchical_loss(
    query_embeddings,
    query_labels: Sequence[int],
    hierarchy: PrototypeHierarchy,
    alpha: float,
) -> Tuple[Tensor, np.ndarray]:
    """hierarchical_loss over every level of an episode's prototype hierarchy"""
    logits = [level_logits(query_embeddings, level, hierarchy.distance) for level in hierarchy.levels]
    paths = np.stack([level_targets(hierarchy.tree, query_labels, level) for level in hierarchy.levels], axis=1)
    return hierarchical_loss(logits, paths, alpha)


def prototypical_loss(
    query_embeddings,
    query_labels: Sequence[int],
    prototypes: LevelPrototypes,
    distance: Union[DistanceKind, str] = DistanceKind.SQUARED_EUCLIDEAN,
) -> Tensor:
    """Non-hierarchical prototypical network loss over the leaf classes"""
    targets = np.array([prototypes.index_of(int(label)) for label in query_labels], dtype=np.int64)
    return ops.softmax_with_cross_entropy(level_logits(query_embeddings, prototypes, distance), targets)


def multi_hot_targets(node_ids: Sequence[int], ground_truth_paths: Sequence[Sequence[int]]) -> np.ndarray:
    """
    One row per query with 1 at every scored node on its ground-truth path

    Raises:
        PrototypeError: A path node has no score column
    """
    column = {int(node): i for i, node in enumerate(node_ids)}
    targets = np.zeros((len(ground_truth_paths), len(column)))
    for row, path in enumerate(ground_truth_paths):
        for node in path:
            if int(node) not in column:
                raise PrototypeError(f"missing score for node {node}")
            targets[row, column[int(node)]] = 1.0
    return targets


def flat_bce_loss(
    per_node_scores,
    node_ids: Sequence[int],
    ground_truth_paths: Sequence[Sequence[int]],
) -> Tensor:
    """
    Mean binary cross-entropy of sigmoid(score) against the multi-hot path target

    Args:
        per_node_scores: Tensor [Q, P], one column per non-root node
        node_ids: Node id of each column
        ground_truth_paths: Per query, the non-root nodes on its leaf-to-root path
    """
    per_node_scores = as_tensor(per_node_scores)
    if per_node_scores.ndim != 2 or per_node_scores.shape[1] != len(node_ids):
        raise PrototypeError(f"{len(node_ids)} node ids for scores of shape {list(per_node_scores.shape)}")
    return ops.sigmoid_with_binary_cross_entropy(per_node_scores, multi_hot_targets(node_ids, ground_truth_paths))


def node_scores(query_embeddings, hierarchy: PrototypeHierarchy) -> Tuple[Tensor, Tuple[int, ...]]:
    """Negated distances to every (meta)prototype of levels 0..H, concatenated over levels"""
    scores = ops.concat([level_logits(query_embeddings, level, hierarchy.distance) for level in hierarchy.levels], axis=1)
    node_ids = tuple(node for level in hierarchy.levels for node in level.node_ids)
    return scores, node_ids


def episode_flat_bce_loss(query_embeddings, query_labels: Sequence[int], hierarchy: PrototypeHierarchy) -> Tensor:
    """flat_bce_loss with scores and multi-hot targets taken from the episode hierarchy"""
    scores, node_ids = node_scores(query_embeddings, hierarchy)
    paths = [hierarchy.tree.ancestors(label) for label in query_labels]
    return flat_bce_loss(scores, node_ids, paths)


# ------------------------------------------------------------- classification


def classify_batch(query_embeddings, hierarchy: PrototypeHierarchy) -> np.ndarray:
    """
    Nearest (meta)prototype at every level for each query

    Returns:
        Array [Q, H+1] of node ids; ties go to the lowest node id. Levels are
        predicted independently, so rows need not be a consistent tree path.
    """
    values = query_embeddings.data if isinstance(query_embeddings, Tensor) else np.asarray(query_embeddings, dtype=np.float64)
    batch = Tensor(values[None, :] if values.ndim == 1 else values)
    columns = []
    for level in hierarchy.levels:
        distances = pairwise_distances(batch, level, hierarchy.distance).data
        ids = np.asarray(level.node_ids)
        columns.append(ids[np.argmin(distances, axis=1)])
    return np.stack(columns, axis=1)


def classify(query_embedding, hierarchy: PrototypeHierarchy) -> List[int]:
    """Per-level predicted node ids for a single query"""
    return [int(node) for node in classify_batch(query_embedding, hierarchy)[0]]

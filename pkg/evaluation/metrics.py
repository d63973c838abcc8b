"""
Episode metrics: macro F1 at the leaf level and mistake severity
"""

from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score

from taxonomy.class_tree import ClassTree, LeafRef
from utils.errors import StatisticsError


def _check_inputs(predictions: Sequence, truths: Sequence, class_set: Optional[Sequence] = None):
    if len(predictions) == 0 or len(truths) == 0:
        raise StatisticsError("predictions and truths must be non-empty")
    if len(predictions) != len(truths):
        raise StatisticsError(f"{len(predictions)} predictions for {len(truths)} truths")
    if class_set is not None:
        unknown = (set(predictions) | set(truths)) - set(class_set)
        if unknown:
            raise StatisticsError(f"labels {sorted(map(str, unknown))} are not in the class set")


def macro_f1(predictions: Sequence, truths: Sequence, class_set: Sequence) -> float:
    """
    Unweighted mean of per-class F1 over class_set

    A class that is neither predicted nor present contributes an F1 of 0.
    """
    _check_inputs(predictions, truths, class_set)
    return float(f1_score(list(truths), list(predictions), labels=list(class_set), average="macro", zero_division=0))


def per_class_f1(predictions: Sequence, truths: Sequence, class_set: Sequence) -> Dict:
    _check_inputs(predictions, truths, class_set)
    scores = f1_score(list(truths), list(predictions), labels=list(class_set), average=None, zero_division=0)
    return {label: float(score) for label, score in zip(class_set, scores)}


def confusion_counts(predictions: Sequence, truths: Sequence, class_set: Sequence) -> List[List[int]]:
    """Rows are true classes, columns predicted classes, both ordered like class_set"""
    _check_inputs(predictions, truths, class_set)
    return confusion_matrix(list(truths), list(predictions), labels=list(class_set)).tolist()


def mistake_severity(predictions: Sequence[LeafRef], truths: Sequence[LeafRef], tree: ClassTree) -> Optional[float]:
    """
    Mean LCA height over misclassified queries; None when there are no mistakes

    Leaves may be given by id or by name.
    """
    _check_inputs(predictions, truths)
    heights = [
        tree.lca_height(predicted, truth)
        for predicted, truth in zip(predictions, truths)
        if tree.resolve_leaf(predicted) != tree.resolve_leaf(truth)
    ]
    return float(np.mean(heights)) if heights else None

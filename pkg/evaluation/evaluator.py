"""
Few-shot evaluation on held-out leaf classes
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from autodiff import no_grad, ops
from episodes.sampler import Episode, sample_episode
from evaluation.config import ExperimentConfig
from evaluation.data import ExperimentData, prepare_experiment
from evaluation.metrics import confusion_counts, macro_f1, mistake_severity, per_class_f1
from models.embedding_net import EmbedMode, ParameterSet, embed, load_params
from models.protonet import (
    LossKind,
    build_hierarchy,
    classify_batch,
    compute_prototypes,
    episode_hierarchical_loss,
    pairwise_distances,
    prototypical_loss,
)
from reporting.report_generator import EpisodeReport, summarize
from utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    shots: int
    reports: List[EpisodeReport]
    summary: Dict


class EpisodeEvaluator:
    """
    Scores a fixed model on evaluation episodes

    Episode i uses seed evaluation.seed + i, so two models evaluated with the
    same config see identical classes, supports and queries.
    """

    def __init__(self, theta: ParameterSet, config: ExperimentConfig, data: ExperimentData):
        self.theta = theta
        self.config = config
        self.data = data

    def _predict(self, episode: Episode):
        """Leaf predictions (as names) and per-level CE for one episode"""
        pool = self.data.eval_pool
        tree = self.data.tree
        rows = np.concatenate([episode.support_rows(), episode.query_rows()])
        embeddings = embed(self.theta, pool.features[rows], EmbedMode.EVAL)
        n_support = episode.support_rows().size
        support = ops.slice_rows(embeddings, 0, n_support)
        query = ops.slice_rows(embeddings, n_support, rows.size)

        support_labels = [tree.leaf_id(name) for name in episode.support_labels()]
        query_labels = [tree.leaf_id(name) for name in episode.query_labels()]
        settings = self.config.loss

        if settings.kind == LossKind.BASELINE:
            prototypes = compute_prototypes(support, support_labels)
            distances = pairwise_distances(query, prototypes, settings.distance).data
            predicted = np.asarray(prototypes.node_ids)[np.argmin(distances, axis=1)]
            level_losses = np.array([prototypical_loss(query, query_labels, prototypes, settings.distance).item()])
        else:
            hierarchy = build_hierarchy(support, support_labels, tree, settings.distance)
            predicted = classify_batch(query, hierarchy)[:, 0]
            _, level_losses = episode_hierarchical_loss(query, query_labels, hierarchy, settings.alpha)

        return [tree.name(int(node)) for node in predicted], level_losses

    def evaluate_episode(self, seed: int, shots: int) -> EpisodeReport:
        evaluation = self.config.evaluation
        episode = sample_episode(
            self.data.eval_pool,
            way=evaluation.way,
            shots=shots,
            queries=evaluation.queries,
            seed=seed,
        )
        with no_grad():
            predictions, level_losses = self._predict(episode)
        truths = episode.query_labels()
        classes = list(episode.classes)

        return EpisodeReport(
            seed=int(seed),
            shots=int(shots),
            f1=macro_f1(predictions, truths, classes),
            severity=mistake_severity(predictions, truths, self.data.severity_tree),
            level_losses=[float(x) for x in level_losses],
            classes=classes,
            confusion=confusion_counts(predictions, truths, classes),
            per_class_f1=per_class_f1(predictions, truths, classes),
            mistakes=int(sum(p != t for p, t in zip(predictions, truths))),
        )

    def run(self, shots: int, episodes: Optional[int] = None, workers: Optional[int] = None) -> EvaluationResult:
        """
        Evaluate `episodes` episodes with N=shots in a thread pool

        Reports come back in seed order whatever the number of workers.
        """
        evaluation = self.config.evaluation
        count = episodes if episodes is not None else evaluation.episodes
        workers = workers if workers is not None else evaluation.workers
        seeds = [evaluation.seed + i for i in range(count)]

        with ThreadPoolExecutor(max_workers=workers) as executor:
            reports = list(tqdm(
                executor.map(lambda s: self.evaluate_episode(s, shots), seeds),
                total=count,
                desc=f"evaluate N={shots}",
                leave=False,
            ))

        summary = summarize(reports)
        logger.info(
            f"Evaluated {count} episodes (K={evaluation.way}, N={shots}, M={evaluation.queries}) | "
            f"F1 mean {summary['f1_mean']:.4f} median {summary['f1_median']:.4f} | "
            f"severity {summary['severity_mean']}"
        )
        return EvaluationResult(shots=shots, reports=reports, summary=summary)


def load_checkpoint(checkpoint: Union[str, Path], config: ExperimentConfig) -> ParameterSet:
    """Load θ; the checkpoint's backbone must equal config.backbone"""
    theta = load_params(checkpoint, config.backbone)
    logger.info(f"✓ Loaded checkpoint from {checkpoint} ({theta.n_parameters:,} parameters)")
    return theta


def evaluate(
    checkpoint: Union[str, Path],
    config: ExperimentConfig,
    shots: Optional[int] = None,
    data: Optional[ExperimentData] = None,
    theta: Optional[ParameterSet] = None,
) -> EvaluationResult:
    """
    Evaluate a checkpoint on the evaluation split

    Args:
        checkpoint: Checkpoint manifest written by training
        config: Experiment config the checkpoint was trained with
        shots: Support size N; defaults to the first of evaluation.shots
        data: Prepared experiment data, reused across calls
        theta: Already loaded parameters; skips reading checkpoint

    Raises:
        DataError: Backbone mismatch, or evaluation classes unknown to the tree
        EpisodeError: Evaluation split too small for (K, N, M)
    """
    data = data if data is not None else prepare_experiment(config)
    theta = theta if theta is not None else load_checkpoint(checkpoint, config)
    unknown = sorted(set(data.eval_pool.classes) - set(data.tree.leaf_index))
    if unknown:
        raise DataError(f"evaluation classes {unknown[:5]} are not leaves of the model tree")
    if set(data.split.eval) & set(data.split.train):
        raise DataError("evaluation split overlaps the training split")

    n = shots if shots is not None else config.evaluation.shots[0]
    return EpisodeEvaluator(theta, config, data).run(n)

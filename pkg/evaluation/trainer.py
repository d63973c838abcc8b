"""
Episodic Trainer
Adam over prototypical-network episodes with validation-based early stopping
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from autodiff import Adam, Tensor, backward, no_grad, ops
from episodes.sampler import Episode, sample_episode
from evaluation.config import ExperimentConfig
from evaluation.data import ExperimentData, prepare_experiment
from features.dataset import PatchPool
from models.embedding_net import EmbedMode, ParameterSet, embed, init_params, save_params
from models.protonet import (
    LossKind,
    build_hierarchy,
    compute_prototypes,
    episode_flat_bce_loss,
    episode_hierarchical_loss,
    prototypical_loss,
)
from utils.errors import NumericError

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best_model"
FINAL_CHECKPOINT = "final_model"


def run_directory(config: ExperimentConfig) -> Path:
    return Path(config.output_dir) / config.name


@dataclass
class TrainingResult:
    """Where training left its artifacts and how it ended"""
    run_dir: Path
    best_checkpoint: Path
    final_checkpoint: Path
    steps: int
    best_step: int
    best_val_loss: float
    early_stopped: bool
    history: Dict[str, List] = field(repr=False, default_factory=dict)


class EpisodicTrainer:
    """
    One model, one loss, one stream of training episodes

    Episode i of training is sampled with seed training.episode_seed + i, and
    validation always uses the same episodes (training.validation_seed + j)
    drawn from the training split, so runs with equal seeds are reproducible
    and comparable across loss kinds.
    """

    def __init__(self, config: ExperimentConfig, data: ExperimentData, theta: Optional[ParameterSet] = None):
        self.config = config
        self.data = data
        self.tree = data.tree
        self.theta = theta if theta is not None else init_params(config.backbone)
        self.optimizer = Adam(self.theta.params, lr=config.training.learning_rate)

        self.history: Dict[str, List] = {
            'step': [],
            'loss': [],
            'level_losses': [],
            'val_step': [],
            'val_loss': [],
        }
        self.best_val_loss = np.inf
        self.best_step = 0

    # ------------------------------------------------------------------ losses

    def episode_loss(self, episode: Episode, pool: PatchPool, mode: EmbedMode) -> Tuple[Tensor, np.ndarray]:
        """
        Loss of one episode plus the per-level cross-entropies

        Support and query rows are embedded in one batch so batch statistics
        are shared, then split again.
        """
        rows = np.concatenate([episode.support_rows(), episode.query_rows()])
        embeddings = embed(self.theta, pool.features[rows], mode)
        n_support = episode.support_rows().size
        support = ops.slice_rows(embeddings, 0, n_support)
        query = ops.slice_rows(embeddings, n_support, rows.size)

        support_labels = [self.tree.leaf_id(name) for name in episode.support_labels()]
        query_labels = [self.tree.leaf_id(name) for name in episode.query_labels()]
        settings = self.config.loss

        if settings.kind == LossKind.BASELINE:
            prototypes = compute_prototypes(support, support_labels)
            loss = prototypical_loss(query, query_labels, prototypes, settings.distance)
            return loss, np.array([loss.item()])

        hierarchy = build_hierarchy(support, support_labels, self.tree, settings.distance)
        if settings.kind == LossKind.HIERARCHICAL:
            return episode_hierarchical_loss(query, query_labels, hierarchy, settings.alpha)

        loss = episode_flat_bce_loss(query, query_labels, hierarchy)
        with no_grad():
            _, level_losses = episode_hierarchical_loss(query, query_labels, hierarchy, settings.alpha)
        return loss, level_losses

    def train_step(self, step: int) -> Tuple[float, np.ndarray]:
        training = self.config.training
        episode = sample_episode(
            self.data.train_pool,
            way=training.way,
            shots=training.shots,
            queries=training.queries,
            seed=training.episode_seed + step,
        )
        self.optimizer.zero_grad()
        loss, level_losses = self.episode_loss(episode, self.data.train_pool, EmbedMode.TRAIN)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite training loss {value} at step {step}", step=step)
        backward(loss)
        self.optimizer.step()
        return value, level_losses

    def validate(self) -> float:
        """Mean loss over the fixed validation episodes, without updating anything"""
        training = self.config.training
        losses = []
        with no_grad():
            for j in range(training.validation_episodes):
                episode = sample_episode(
                    self.data.train_pool,
                    way=training.way,
                    shots=training.shots,
                    queries=training.queries,
                    seed=training.validation_seed + j,
                )
                loss, _ = self.episode_loss(episode, self.data.train_pool, EmbedMode.EVAL)
                losses.append(loss.item())
        value = float(np.mean(losses))
        if not np.isfinite(value):
            raise NumericError(f"non-finite validation loss after {self.optimizer.steps} steps", step=self.optimizer.steps)
        return value

    # ---------------------------------------------------------------- training

    def _checkpoint_metadata(self, steps: int, val_loss: float) -> Dict:
        return {
            'experiment': self.config.name,
            'steps': steps,
            'val_loss': val_loss,
            'loss': self.config.loss.model_dump(mode="json"),
            'tree': self.tree.to_document(),
            'split': self.data.split.to_dict(),
        }

    def _record_validation(self, steps: int, checkpoint_dir: Path) -> float:
        val_loss = self.validate()
        self.history['val_step'].append(steps)
        self.history['val_loss'].append(val_loss)

        if val_loss < self.best_val_loss:
            self.best_val_loss = val_loss
            self.best_step = steps
            save_params(self.theta, checkpoint_dir / BEST_CHECKPOINT, self._checkpoint_metadata(steps, val_loss))
            logger.info(f"Step {steps} | Val Loss: {val_loss:.4f} | ✓ new best, checkpoint saved")
        else:
            logger.info(
                f"Step {steps} | Val Loss: {val_loss:.4f} | "
                f"best {self.best_val_loss:.4f} at step {self.best_step}"
            )
        return val_loss

    def fit(self, output_dir: Optional[Path] = None) -> TrainingResult:
        """
        Run the episodic loop until max_steps or until the validation loss has
        not improved for `patience` steps

        Validation happens before the update of every step divisible by the
        validation interval and once more after the last update.

        Raises:
            EpisodeError: Training split too small for (K, N, M)
            NumericError: Non-finite loss, carrying the step index
        """
        training = self.config.training
        run_dir = Path(output_dir) if output_dir is not None else run_directory(self.config)
        checkpoint_dir = run_dir / "checkpoints"
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

        logger.info("=" * 70)
        logger.info(f"TRAINING '{self.config.name}'")
        logger.info("=" * 70)
        logger.info(f"Tree: {self.tree.describe()}")
        logger.info(f"Loss: {self.config.loss.kind.value} (alpha={self.config.loss.alpha}, {self.config.loss.distance.value})")
        logger.info(f"Episodes: K={training.way} N={training.shots} M={training.queries}")
        logger.info(f"Learning Rate: {training.learning_rate}")
        logger.info(f"Max Steps: {training.max_steps} (patience {training.patience})")
        logger.info(f"Model Parameters: {self.theta.n_parameters:,}")
        logger.info("=" * 70)

        early_stopped = False
        steps = 0
        last_validated = -1
        progress = tqdm(range(training.max_steps), desc="train", unit="step", leave=False)
        for step in progress:
            if step % training.validation_interval == 0:
                self._record_validation(step, checkpoint_dir)
                last_validated = step
                if step - self.best_step >= training.patience:
                    logger.info(f"Early stopping at step {step}: no improvement since step {self.best_step}")
                    early_stopped = True
                    break

            loss, level_losses = self.train_step(step)
            steps = step + 1
            self.history['step'].append(step)
            self.history['loss'].append(loss)
            self.history['level_losses'].append([float(x) for x in level_losses])
            logger.debug(f"step {step} loss {loss:.6f} levels {np.round(level_losses, 6).tolist()}")
            progress.set_postfix(loss=f"{loss:.4f}")

        if not early_stopped and steps != last_validated:
            self._record_validation(steps, checkpoint_dir)

        final_checkpoint = save_params(
            self.theta,
            checkpoint_dir / FINAL_CHECKPOINT,
            self._checkpoint_metadata(steps, self.history['val_loss'][-1]),
        )
        self._write_history(run_dir)

        logger.info("=" * 70)
        logger.info("TRAINING COMPLETE")
        logger.info("=" * 70)
        logger.info(f"Steps: {steps}")
        logger.info(f"Best Validation Loss: {self.best_val_loss:.4f} (step {self.best_step})")
        logger.info(f"Checkpoints saved to: {checkpoint_dir}")
        logger.info("=" * 70)

        return TrainingResult(
            run_dir=run_dir,
            best_checkpoint=checkpoint_dir / f"{BEST_CHECKPOINT}.json",
            final_checkpoint=final_checkpoint,
            steps=steps,
            best_step=self.best_step,
            best_val_loss=float(self.best_val_loss),
            early_stopped=early_stopped,
            history=self.history,
        )

    def _write_history(self, run_dir: Path):
        with open(run_dir / "training_history.json", 'w') as f:
            json.dump(self.history, f, indent=2)

        frame = pd.DataFrame({'step': self.history['step'], 'loss': self.history['loss']})
        if self.history['level_losses']:
            levels = pd.DataFrame(self.history['level_losses']).add_prefix('ce_level_')
            frame = pd.concat([frame, levels], axis=1)
        validation = pd.DataFrame({'step': self.history['val_step'], 'val_loss': self.history['val_loss']})
        frame = frame.merge(validation, on='step', how='outer').sort_values('step')
        frame.to_csv(run_dir / "training_log.csv", index=False)


def train(
    config: ExperimentConfig,
    data: Optional[ExperimentData] = None,
    output_dir: Optional[Path] = None,
) -> TrainingResult:
    """
    Train a model for config; the config and split are saved next to the checkpoints
    """
    data = data if data is not None else prepare_experiment(config)
    run_dir = Path(output_dir) if output_dir is not None else run_directory(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.save(run_dir / "config.yaml")
    data.split.save(run_dir / "split.json")
    data.tree.save(run_dir / "tree.json")

    trainer = EpisodicTrainer(config, data)
    return trainer.fit(run_dir)

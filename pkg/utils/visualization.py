"""
Visualization Utilities
Box plots of per-episode F1, severity bars and training curves
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

logger = logging.getLogger(__name__)

# Set style
sns.set_style("darkgrid")
plt.rcParams['figure.figsize'] = (12, 6)
plt.rcParams['font.size'] = 10


class AblationVisualizer:
    """Creates the figures of an ablation or training run"""

    def __init__(self, output_dir: Union[str, Path] = "results/plots"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _save(self, fig, save_name: str) -> Path:
        path = self.output_dir / save_name
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        logger.info(f"Saved plot to {path}")
        return path

    def plot_f1_distribution(
        self,
        frame: pd.DataFrame,
        title: str = "Per-episode macro F1",
        save_name: str = "f1_boxplot.png",
        order: Optional[List[str]] = None,
    ) -> Path:
        """
        Box plot of episode F1 per variant

        Args:
            frame: Long table with 'variant' and 'f1' columns
            order: Variant order on the x axis; defaults to first appearance
        """
        order = order or list(dict.fromkeys(frame['variant']))
        fig, ax = plt.subplots()
        sns.boxplot(data=frame, x='variant', y='f1', order=order, ax=ax, color="#8da0cb")
        sns.stripplot(data=frame, x='variant', y='f1', order=order, ax=ax, color="0.25", size=2, alpha=0.4)
        ax.set_title(title)
        ax.set_xlabel("")
        ax.set_ylabel("F1")
        ax.set_ylim(0.0, 1.0)
        return self._save(fig, save_name)

    def plot_severity(
        self,
        frame: pd.DataFrame,
        title: str = "Mean mistake severity",
        save_name: str = "severity.png",
        order: Optional[List[str]] = None,
    ) -> Path:
        order = order or list(dict.fromkeys(frame['variant']))
        means = frame.groupby('variant', sort=False)['severity'].mean().reindex(order)
        fig, ax = plt.subplots()
        sns.barplot(x=means.index, y=means.values, ax=ax, color="#fc8d62")
        ax.set_title(title)
        ax.set_xlabel("")
        ax.set_ylabel("LCA height")
        return self._save(fig, save_name)

    def plot_training_curves(
        self,
        history: Dict[str, List],
        title: str = "Training",
        save_name: str = "training_curves.png",
    ) -> Path:
        """Per-step training loss with the validation checks on top"""
        fig, ax = plt.subplots()
        train = pd.Series(history['loss'], index=history['step'], dtype=float)
        window = max(1, len(train) // 50)
        ax.plot(train.index, train.values, alpha=0.3, label="train loss")
        ax.plot(train.index, train.rolling(window, min_periods=1).mean().values, label=f"train loss ({window}-step mean)")
        ax.plot(history['val_step'], history['val_loss'], marker='o', label="validation loss")
        ax.set_title(title)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.legend()
        return self._save(fig, save_name)

"""
Experiment harness: configuration, training, evaluation, statistics and ablations
"""

from evaluation.config import ExperimentConfig, apply_overrides, load_config
from evaluation.data import ExperimentData, prepare_experiment
from evaluation.metrics import confusion_counts, macro_f1, mistake_severity, per_class_f1
from evaluation.stats import WilcoxonResult, wilcoxon_signed_rank
from evaluation.trainer import EpisodicTrainer, TrainingResult, train
from evaluation.evaluator import EpisodeEvaluator, EvaluationResult, evaluate
from evaluation.ablation import AblationKind, AblationResult, compare_reports, run_ablation

__all__ = [
    'AblationKind',
    'AblationResult',
    'EpisodeEvaluator',
    'EpisodicTrainer',
    'EvaluationResult',
    'ExperimentConfig',
    'ExperimentData',
    'TrainingResult',
    'WilcoxonResult',
    'apply_overrides',
    'compare_reports',
    'confusion_counts',
    'evaluate',
    'load_config',
    'macro_f1',
    'mistake_severity',
    'per_class_f1',
    'prepare_experiment',
    'run_ablation',
    'train',
    'wilcoxon_signed_rank',
]

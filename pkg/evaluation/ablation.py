"""
Ablation Runner
Trains and evaluates model variants on matched episode streams and compares them
against the flat (H=0) baseline
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from evaluation.config import ExperimentConfig
from evaluation.data import load_pool, prepare_experiment
from evaluation.evaluator import EvaluationResult, evaluate
from evaluation.stats import wilcoxon_signed_rank
from evaluation.trainer import train
from features.dataset import PatchPool
from models.protonet import LossKind
from reporting.report_generator import EpisodeReport, ReportGenerator, reports_frame
from taxonomy.class_tree import load_tree, random_swap_tree
from utils.errors import ConfigError, DataError, StatisticsError
from utils.visualization import AblationVisualizer

logger = logging.getLogger(__name__)

BASELINE = "H0"


class AblationKind(str, Enum):
    HEIGHT = "height"
    ALPHA = "alpha"
    SHOTS = "shots"
    RANDOM_TREES = "random_trees"
    LOSS = "loss"

    @classmethod
    def parse(cls, value: Union[str, "AblationKind"]) -> "AblationKind":
        try:
            return cls(str(getattr(value, "value", value)).replace("-", "_"))
        except ValueError as exc:
            raise ConfigError(f"unknown ablation kind '{value}', expected one of {[k.value for k in cls]}") from exc


@dataclass
class Variant:
    """One trained model and the support sizes it is evaluated with"""
    name: str
    config: ExperimentConfig
    shots: List[int]


@dataclass
class AblationResult:
    kind: AblationKind
    output_dir: Path
    reports: Dict[str, List[EpisodeReport]]
    comparison: Dict[str, Dict]
    csv_path: Path
    tree_files: List[Path] = field(default_factory=list)


def _variant(base: ExperimentConfig, name: str, shots: List[int], **changes) -> Variant:
    changes["name"] = f"{base.name}-{name}"
    return Variant(name=name, config=base.updated(**changes), shots=shots)


def _baseline(base: ExperimentConfig, shots: List[int]) -> Variant:
    return _variant(base, BASELINE, shots, **{"tree.height": 0, "tree.swap_seed": None, "loss.kind": LossKind.HIERARCHICAL.value})


def ablation_variants(kind: Union[str, AblationKind], base: ExperimentConfig) -> List[Variant]:
    """
    The model variants of an ablation; the first is always the H=0 baseline

    Variants differ from base only in tree, loss or support size, so they share
    initialisation, split and every episode seed.
    """
    kind = AblationKind.parse(kind)
    settings = base.ablation
    default_shots = [base.evaluation.shots[0]]
    source_height = load_tree(base.tree.source).height
    model_height = source_height if base.tree.height is None else base.tree.height

    if kind == AblationKind.HEIGHT:
        heights = settings.heights if settings.heights is not None else list(range(source_height + 1))
        if 0 not in heights:
            heights = [0] + list(heights)
        return [
            _variant(base, f"H{h}", default_shots, **{"tree.height": h, "loss.kind": LossKind.HIERARCHICAL.value})
            for h in sorted(set(heights))
        ]

    if model_height == 0:
        raise ConfigError(f"a {kind.value} ablation needs a hierarchical base model, tree.height is 0")

    if kind == AblationKind.ALPHA:
        return [_baseline(base, default_shots)] + [
            _variant(base, f"alpha={alpha:g}", default_shots, **{"loss.kind": LossKind.HIERARCHICAL.value, "loss.alpha": alpha})
            for alpha in settings.alphas
        ]

    if kind == AblationKind.SHOTS:
        shots = list(settings.shots)
        return [_baseline(base, shots), _variant(base, f"H{model_height}", shots, **{"loss.kind": LossKind.HIERARCHICAL.value})]

    if kind == AblationKind.RANDOM_TREES:
        variants = [
            _baseline(base, default_shots),
            _variant(base, f"H{model_height}", default_shots, **{"tree.swap_seed": None}),
        ]
        for i in range(settings.random_trees):
            variants.append(_variant(
                base,
                f"random{i:02d}",
                default_shots,
                **{"tree.swap_seed": settings.random_tree_seed + i},
            ))
        return variants

    return [
        _baseline(base, default_shots),
        _variant(base, "hierarchical", default_shots, **{"loss.kind": LossKind.HIERARCHICAL.value}),
        _variant(base, "flat_bce", default_shots, **{"loss.kind": LossKind.FLAT_BCE.value}),
    ]


def _paired_test(a: Sequence[float], b: Sequence[float], alternative: str) -> Dict:
    try:
        return wilcoxon_signed_rank(a, b, alternative=alternative).to_dict()
    except StatisticsError as exc:
        return {'error': str(exc), 'n_effective': 0}


def compare_reports(
    reports_a: Sequence[EpisodeReport],
    reports_b: Sequence[EpisodeReport],
    alternative: str = "greater",
) -> Dict:
    """
    Paired comparison of two models evaluated on the same episodes

    F1 is tested with `alternative` (a better than b by default); mistake
    severity, where lower is better, with the opposite direction over the
    episodes in which both models made mistakes.

    Raises:
        DataError: The reports do not cover the same (seed, shots) episodes
    """
    by_episode_a = {(r.seed, r.shots): r for r in reports_a}
    by_episode_b = {(r.seed, r.shots): r for r in reports_b}
    if set(by_episode_a) != set(by_episode_b):
        raise DataError("reports are not paired: their episode seeds or support sizes differ")
    episodes = sorted(by_episode_a)

    f1_a = [by_episode_a[e].f1 for e in episodes]
    f1_b = [by_episode_b[e].f1 for e in episodes]
    both = [e for e in episodes if by_episode_a[e].severity is not None and by_episode_b[e].severity is not None]
    severity_a = [by_episode_a[e].severity for e in both]
    severity_b = [by_episode_b[e].severity for e in both]
    severity_alternative = {"greater": "less", "less": "greater"}.get(alternative, alternative)

    class_f1_a = pd.DataFrame([by_episode_a[e].per_class_f1 for e in episodes]).mean()
    class_f1_b = pd.DataFrame([by_episode_b[e].per_class_f1 for e in episodes]).mean()
    shared = sorted(set(class_f1_a.index) & set(class_f1_b.index))
    per_class = {label: float(class_f1_a[label] - class_f1_b[label]) for label in shared}

    return {
        'episodes': len(episodes),
        'f1_mean_a': float(np.mean(f1_a)),
        'f1_mean_b': float(np.mean(f1_b)),
        'f1_test': _paired_test(f1_a, f1_b, alternative),
        'severity_mean_a': float(np.mean(severity_a)) if both else None,
        'severity_mean_b': float(np.mean(severity_b)) if both else None,
        'severity_test': _paired_test(severity_a, severity_b, severity_alternative),
        'per_class_f1_difference': per_class,
    }


def _report_name(variant: Variant, shots: int, multi: bool) -> str:
    return f"{variant.name}_N{shots}" if multi else variant.name


def run_ablation(
    kind: Union[str, AblationKind],
    base_config: ExperimentConfig,
    output_dir: Optional[Union[str, Path]] = None,
    pool: Optional[PatchPool] = None,
) -> AblationResult:
    """
    Train and evaluate every variant, then compare each with the H=0 baseline

    Layout under output_dir:
        variants/<name>/    checkpoints, training history, config, split, tree
        reports/            one JSONL and summary per (variant, N)
        trees/              generated trees (random_trees only)
        comparison.json     Wilcoxon tests against the baseline
        results.csv         per-episode table for plotting
        plots/              F1 box plots, severity bars, training curves
    """
    kind = AblationKind.parse(kind)
    out = Path(output_dir) if output_dir is not None else Path(base_config.output_dir) / f"ablation_{kind.value}"
    variants = ablation_variants(kind, base_config)
    generator = ReportGenerator(out)
    visualizer = AblationVisualizer(out / "plots")

    logger.info("=" * 70)
    logger.info(f"ABLATION '{kind.value}': {len(variants)} variants -> {out}")
    logger.info("=" * 70)

    tree_files: List[Path] = []
    if kind == AblationKind.RANDOM_TREES:
        source = load_tree(base_config.tree.source)
        for variant in variants:
            if variant.config.tree.swap_seed is not None:
                swapped = random_swap_tree(source, variant.config.tree.swap_seed, variant.config.tree.swaps_per_leaf)
                tree_files.append(swapped.save(out / "trees" / f"{variant.name}.json"))

    if pool is None:
        pool = load_pool(base_config, load_tree(base_config.tree.source))

    multi = kind == AblationKind.SHOTS
    reports: Dict[str, List[EpisodeReport]] = {}
    for variant in variants:
        logger.info(f"Variant {variant.name}")
        data = prepare_experiment(variant.config, pool=pool)
        result = train(variant.config, data=data, output_dir=out / "variants" / variant.name)
        visualizer.plot_training_curves(result.history, title=variant.name, save_name=f"training_{variant.name}.png")
        for shots in variant.shots:
            evaluation: EvaluationResult = evaluate(result.best_checkpoint, variant.config, shots=shots, data=data)
            name = _report_name(variant, shots, multi)
            reports[name] = evaluation.reports
            generator.write_reports(name, evaluation.reports, metadata={'variant': variant.name, 'shots': shots})

    baseline = variants[0]
    comparison: Dict[str, Dict] = {}
    for variant in variants[1:]:
        for shots in variant.shots:
            name = _report_name(variant, shots, multi)
            reference = _report_name(baseline, shots, multi)
            comparison[name] = {'baseline': reference, **compare_reports(reports[name], reports[reference])}
            f1_p = comparison[name]['f1_test'].get('p_value')
            logger.info(
                f"{name} vs {reference}: F1 {comparison[name]['f1_mean_a']:.4f} vs "
                f"{comparison[name]['f1_mean_b']:.4f} (p={f1_p})"
            )

    generator.write_json(out / "comparison.json", {'kind': kind.value, 'comparisons': comparison})
    csv_path = generator.export_csv(reports)
    frame = reports_frame(reports)
    visualizer.plot_f1_distribution(frame, title=f"{kind.value} ablation: per-episode F1", save_name="f1_boxplot.png")
    visualizer.plot_severity(frame, title=f"{kind.value} ablation: mean mistake severity", save_name="severity.png")

    logger.info("=" * 70)
    logger.info("ABLATION COMPLETE")
    logger.info("=" * 70)
    return AblationResult(
        kind=kind,
        output_dir=out,
        reports=reports,
        comparison=comparison,
        csv_path=csv_path,
        tree_files=tree_files,
    )

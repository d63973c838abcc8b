"""
Command-line interface

    hproto synth-data <manifest> <out-dir>
    hproto split      [--config FILE] [--set a.b=v ...]
    hproto train      [--config FILE] [--set a.b=v ...]
    hproto evaluate   [--config FILE] [--checkpoint PATH]
    hproto ablate     --kind {height,alpha,shots,random-trees,loss}
    hproto compare    <report-a> <report-b>
    hproto export-csv <report> [<report> ...] --out FILE

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from evaluation.ablation import AblationKind, compare_reports, run_ablation
from evaluation.config import ExperimentConfig, apply_overrides, load_config
from evaluation.data import prepare_experiment
from evaluation.evaluator import evaluate
from evaluation.trainer import BEST_CHECKPOINT, run_directory, train
from features.dataset import write_synthetic_audio
from features.synth import load_manifest
from reporting.report_generator import ReportGenerator, read_reports
from utils.errors import (
    ConfigError,
    DataError,
    GraphError,
    NumericError,
    PrototypeError,
    ShapeError,
    StatisticsError,
    TreeError,
)
from utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, help="YAML or JSON experiment config (default: config/config.yaml)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                        help="override any config field; repeatable")
    parser.add_argument("--alpha", type=float, help="shortcut for --set loss.alpha=...")
    parser.add_argument("--height", type=int, help="shortcut for --set tree.height=...")
    parser.add_argument("--loss", choices=["hierarchical", "flat_bce", "baseline"], help="shortcut for --set loss.kind=...")
    parser.add_argument("--max-steps", type=int, help="shortcut for --set training.max_steps=...")
    parser.add_argument("--output-dir", help="shortcut for --set output_dir=...")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hproto", description="Hierarchical prototypical networks for few-shot audio classification")
    parser.add_argument("--log-level", default=None, help="override logging.level")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth-data", help="render the synthetic instrument dataset to WAV files")
    synth.add_argument("manifest", help="synthetic dataset manifest (JSON)")
    synth.add_argument("out_dir", help="directory receiving <leaf>/<recording>.wav")
    synth.set_defaults(func=cmd_synth_data)

    split = commands.add_parser("split", help="write the family-balanced train/eval leaf split")
    _add_config_arguments(split)
    split.add_argument("--out", help="split plan path (default: <output_dir>/<name>/split.json)")
    split.set_defaults(func=cmd_split)

    train_cmd = commands.add_parser("train", help="train one model")
    _add_config_arguments(train_cmd)
    train_cmd.set_defaults(func=cmd_train)

    evaluate_cmd = commands.add_parser("evaluate", help="evaluate a checkpoint on the evaluation split")
    _add_config_arguments(evaluate_cmd)
    evaluate_cmd.add_argument("--checkpoint", help="checkpoint manifest (default: the run's best checkpoint)")
    evaluate_cmd.add_argument("--shots", type=int, action="append", help="support size N; repeatable")
    evaluate_cmd.set_defaults(func=cmd_evaluate)

    ablate = commands.add_parser("ablate", help="train, evaluate and compare a family of variants")
    _add_config_arguments(ablate)
    ablate.add_argument("--kind", required=True, choices=["height", "alpha", "shots", "random-trees", "random_trees", "loss"])
    ablate.set_defaults(func=cmd_ablate)

    compare = commands.add_parser("compare", help="paired Wilcoxon test between two report files")
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    compare.add_argument("--alternative", default="greater", choices=["two-sided", "greater", "less"],
                         help="direction for F1 (severity uses the opposite)")
    compare.add_argument("--out", help="write the comparison JSON here as well")
    compare.set_defaults(func=cmd_compare)

    export = commands.add_parser("export-csv", help="merge report files into one plot-ready CSV")
    export.add_argument("reports", nargs="+")
    export.add_argument("--out", required=True)
    export.set_defaults(func=cmd_export_csv)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file, then --set overrides, then the shortcut flags"""
    config = load_config(args.config)
    overrides: List = list(args.overrides)
    shortcuts = {
        "loss.alpha": args.alpha,
        "tree.height": args.height,
        "loss.kind": args.loss,
        "training.max_steps": args.max_steps,
        "output_dir": args.output_dir,
    }
    overrides.extend((key, value) for key, value in shortcuts.items() if value is not None)
    return apply_overrides(config, overrides) if overrides else config


def _configure(args: argparse.Namespace, config: Optional[ExperimentConfig] = None):
    configure_logging(config.logging.model_dump() if config is not None else None, args.log_level)


def cmd_synth_data(args: argparse.Namespace) -> int:
    _configure(args)
    paths = write_synthetic_audio(load_manifest(args.manifest), args.out_dir)
    logger.info(f"Wrote {len(paths)} recordings to {args.out_dir}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    _configure(args, config)
    data = prepare_experiment(config)
    path = Path(args.out) if args.out else run_directory(config) / "split.json"
    data.split.save(path)
    for family, (n_train, n_eval) in sorted(data.split.family_counts().items()):
        logger.info(f"  {family}: {n_train} train / {n_eval} eval")
    logger.info(f"Split plan written to {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    _configure(args, config)
    result = train(config)
    logger.info(f"Best checkpoint: {result.best_checkpoint}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    _configure(args, config)
    run_dir = run_directory(config)
    checkpoint = Path(args.checkpoint) if args.checkpoint else run_dir / "checkpoints" / f"{BEST_CHECKPOINT}.json"
    data = prepare_experiment(config)
    generator = ReportGenerator(run_dir)
    for shots in args.shots or config.evaluation.shots:
        result = evaluate(checkpoint, config, shots=shots, data=data)
        generator.write_reports(
            f"{config.name}_N{shots}",
            result.reports,
            metadata={'checkpoint': str(checkpoint), 'split': data.split.to_dict()},
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    _configure(args, config)
    result = run_ablation(AblationKind.parse(args.kind), config)
    logger.info(f"Ablation results in {result.output_dir}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    _configure(args)
    comparison = compare_reports(read_reports(args.report_a), read_reports(args.report_b), args.alternative)
    comparison = {'report_a': args.report_a, 'report_b': args.report_b, **comparison}
    if args.out:
        ReportGenerator(Path(args.out).parent).write_json(args.out, comparison)
    print(json.dumps(comparison, indent=2))
    return EXIT_OK


def cmd_export_csv(args: argparse.Namespace) -> int:
    _configure(args)
    reports = {Path(path).stem: read_reports(path) for path in args.reports}
    out = Path(args.out)
    ReportGenerator(out.parent).export_csv(reports, out.name)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TreeError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except (DataError, StatisticsError) as exc:
        logger.error(f"Data error: {exc}")
        return EXIT_DATA
    except (ShapeError, GraphError, NumericError, PrototypeError) as exc:
        step = getattr(exc, "step", None)
        logger.error(f"Numeric failure{f' at step {step}' if step is not None else ''}: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

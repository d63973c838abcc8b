"""
Synthetic Replication Script
Trains the flat baseline, the hierarchical model and the flat-BCE model on the
bundled synthetic instruments and checks the direction of every effect
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import argparse  # noqa: E402
import logging  # noqa: E402

import pandas as pd  # noqa: E402

from evaluation.ablation import AblationKind, run_ablation  # noqa: E402
from evaluation.config import CONFIG_DIR, apply_overrides, load_config  # noqa: E402
from reporting.report_generator import ReportGenerator  # noqa: E402
from utils.logging_setup import configure_logging  # noqa: E402

logger = logging.getLogger(__name__)

SIGNIFICANCE = 0.05


def check_claims(comparison: dict) -> dict:
    """
    Directional verdicts from a loss ablation

    - the hierarchical model beats the H=0 baseline in F1 (one-sided p < 0.05)
    - its mean mistake severity is strictly lower than the baseline's
    - flat BCE does not beat the hierarchical loss in mean F1
    """
    hierarchical = comparison['hierarchical']
    flat = comparison['flat_bce']
    f1_p = hierarchical['f1_test'].get('p_value')
    severity_h = hierarchical['severity_mean_a']
    severity_b = hierarchical['severity_mean_b']

    return {
        'hierarchical_f1_mean': hierarchical['f1_mean_a'],
        'baseline_f1_mean': hierarchical['f1_mean_b'],
        'flat_bce_f1_mean': flat['f1_mean_a'],
        'f1_p_value': f1_p,
        'f1_improves': bool(f1_p is not None and f1_p < SIGNIFICANCE
                            and hierarchical['f1_mean_a'] > hierarchical['f1_mean_b']),
        'severity_lower': bool(severity_h is not None and severity_b is not None and severity_h < severity_b),
        'flat_bce_not_better': bool(flat['f1_mean_a'] <= hierarchical['f1_mean_a']),
    }


def main(argv=None):
    """Loss ablation on the desk-scale config, then the verdict table"""
    parser = argparse.ArgumentParser(description="Directional replication on synthetic instruments")
    parser.add_argument("--config", default=str(CONFIG_DIR / "synthetic_desk.yaml"))
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    args = parser.parse_args(argv)

    config = load_config(args.config)
    if args.overrides:
        config = apply_overrides(config, args.overrides)
    configure_logging(config.logging.model_dump())

    logger.info("=" * 70)
    logger.info("SYNTHETIC REPLICATION")
    logger.info("=" * 70)

    result = run_ablation(AblationKind.LOSS, config)
    verdict = check_claims(result.comparison)
    ReportGenerator(result.output_dir).write_json(result.output_dir / "replication.json", verdict)

    logger.info("\n" + "=" * 70)
    for claim in ('f1_improves', 'severity_lower', 'flat_bce_not_better'):
        logger.info(f"{claim}: {'PASS' if verdict[claim] else 'FAIL'}")
    logger.info("=" * 70)

    print("\n" + pd.Series(verdict).to_string())
    return 0 if all(verdict[c] for c in ('f1_improves', 'severity_lower', 'flat_bce_not_better')) else 1


if __name__ == "__main__":
    sys.exit(main())

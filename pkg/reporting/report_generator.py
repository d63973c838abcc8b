"""
Episode Report Generation
JSON-lines episode reports, summary JSON and plot-ready CSV tables
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class EpisodeReport:
    """
    Outcome of one evaluation episode

    f1 is the leaf-level macro F1 over the episode's classes; severity is the
    mean LCA height over misclassified queries, or None without mistakes.
    """
    seed: int
    shots: int
    f1: float
    severity: Optional[float]
    level_losses: List[float]
    classes: List[str]
    confusion: List[List[int]]
    per_class_f1: Dict[str, float] = field(default_factory=dict)
    mistakes: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, document: Mapping) -> "EpisodeReport":
        try:
            return cls(**document)
        except TypeError as exc:
            raise DataError(f"malformed episode report: {exc}") from exc


def summarize(reports: Sequence[EpisodeReport]) -> Dict:
    """Distribution of per-episode F1 plus mean mistake severity"""
    if not reports:
        raise DataError("no episode reports to summarize")
    f1 = pd.Series([r.f1 for r in reports], dtype=float)
    severities = pd.Series([r.severity for r in reports if r.severity is not None], dtype=float)
    per_class = pd.DataFrame([r.per_class_f1 for r in reports])

    return {
        'episodes': len(reports),
        'shots': sorted({r.shots for r in reports}),
        'f1_mean': float(f1.mean()),
        'f1_std': float(f1.std(ddof=0)),
        'f1_median': float(f1.median()),
        'f1_q1': float(f1.quantile(0.25)),
        'f1_q3': float(f1.quantile(0.75)),
        'f1_min': float(f1.min()),
        'f1_max': float(f1.max()),
        'severity_mean': float(severities.mean()) if len(severities) else None,
        'episodes_with_mistakes': int(len(severities)),
        'per_class_f1': {label: float(value) for label, value in per_class.mean().sort_index().items()},
    }


def read_reports(path: Union[str, Path]) -> List[EpisodeReport]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report file not found: {path}")
    reports = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            reports.append(EpisodeReport.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{number}: not valid JSON ({exc.msg})") from exc
    if not reports:
        raise DataError(f"{path} contains no episode reports")
    return reports


def reports_frame(reports_by_variant: Mapping[str, Sequence[EpisodeReport]]) -> pd.DataFrame:
    """Long table with one row per (variant, episode), the layout the box plots use"""
    rows = []
    for variant, reports in reports_by_variant.items():
        for report in reports:
            rows.append({
                'variant': variant,
                'seed': report.seed,
                'shots': report.shots,
                'f1': report.f1,
                'severity': np.nan if report.severity is None else report.severity,
                'mistakes': report.mistakes,
            })
    return pd.DataFrame(rows, columns=['variant', 'seed', 'shots', 'f1', 'severity', 'mistakes'])


class ReportGenerator:
    """
    Writes evaluation artifacts under one output directory

    reports/<name>.jsonl        one EpisodeReport per line
    reports/<name>.summary.json summary statistics
    """

    def __init__(self, output_dir: Union[str, Path] = "results"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.reports_dir = self.output_dir / "reports"

    def report_path(self, name: str) -> Path:
        return self.reports_dir / f"{name}.jsonl"

    def write_reports(self, name: str, reports: Sequence[EpisodeReport], metadata: Optional[Dict] = None) -> Path:
        """Write the JSONL file and its summary; returns the JSONL path"""
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        path = self.report_path(name)
        with open(path, 'w', encoding="utf-8") as f:
            for report in reports:
                f.write(json.dumps(report.to_dict()) + "\n")

        summary = summarize(reports)
        summary['name'] = name
        summary['generated_at'] = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
        if metadata:
            summary['metadata'] = metadata
        self.write_json(self.reports_dir / f"{name}.summary.json", summary)

        logger.info(
            f"Report '{name}': {summary['episodes']} episodes, "
            f"F1 mean {summary['f1_mean']:.4f} median {summary['f1_median']:.4f}, "
            f"severity {summary['severity_mean']}"
        )
        return path

    def write_json(self, path: Union[str, Path], document: Dict) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding="utf-8") as f:
            json.dump(document, f, indent=2)
        return path

    def export_csv(self, reports_by_variant: Mapping[str, Sequence[EpisodeReport]], filename: str = "results.csv") -> Path:
        """Plot-ready per-episode table across variants"""
        path = self.output_dir / filename
        reports_frame(reports_by_variant).to_csv(path, index=False)
        logger.info(f"✓ Exported {sum(len(r) for r in reports_by_variant.values())} episode rows to {path}")
        return path

"""
Unit tests for the evaluator and episode reports
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from evaluation.ablation import compare_reports
from evaluation.data import prepare_experiment
from evaluation.evaluator import EpisodeEvaluator, evaluate
from evaluation.trainer import train
from models.embedding_net import load_params
from reporting.report_generator import EpisodeReport, ReportGenerator, read_reports, reports_frame, summarize
from utils.errors import DataError, EpisodeError


def report(seed: int, f1: float, severity=None, shots: int = 4, per_class=None) -> EpisodeReport:
    return EpisodeReport(
        seed=seed,
        shots=shots,
        f1=f1,
        severity=severity,
        level_losses=[0.5],
        classes=["a", "b"],
        confusion=[[1, 0], [0, 1]],
        per_class_f1=per_class or {"a": f1, "b": f1},
        mistakes=0 if severity is None else 1,
    )


@pytest.fixture
def trained(vector_config, tmp_path):
    config = vector_config()
    data = prepare_experiment(config)
    result = train(config, data=data, output_dir=tmp_path / "run")
    return config, data, result


class TestEvaluator:
    """Episodes on the held-out leaves"""

    def test_reports_follow_the_seed_order(self, trained):
        config, data, result = trained
        evaluation = evaluate(result.best_checkpoint, config, data=data)
        assert evaluation.shots == 3
        assert [r.seed for r in evaluation.reports] == [config.evaluation.seed + i for i in range(6)]
        for r in evaluation.reports:
            assert 0.0 <= r.f1 <= 1.0
            assert set(r.classes) <= set(data.split.eval)
            assert len(r.level_losses) == data.tree.height + 1
            assert sum(map(sum, r.confusion)) == config.evaluation.way * config.evaluation.queries
            assert (r.severity is None) == (r.mistakes == 0)
        assert evaluation.summary['episodes'] == 6

    def test_worker_count_does_not_change_results(self, trained):
        config, data, result = trained

        theta = load_params(result.best_checkpoint, config.backbone)
        evaluator = EpisodeEvaluator(theta, config, data)
        serial = evaluator.run(shots=3, episodes=4, workers=1)
        parallel = evaluator.run(shots=3, episodes=4, workers=4)
        assert [r.to_dict() for r in serial.reports] == [r.to_dict() for r in parallel.reports]

    def test_baseline_model_is_scored_on_the_source_tree(self, vector_config, tmp_path):
        config = vector_config(**{"tree.height": 0, "loss.kind": "baseline"})
        data = prepare_experiment(config)
        result = train(config, data=data, output_dir=tmp_path / "baseline")
        evaluation = evaluate(result.best_checkpoint, config, data=data)
        severities = [r.severity for r in evaluation.reports if r.severity is not None]
        assert all(1.0 <= s <= data.source_tree.height + 1 for s in severities)
        assert all(len(r.level_losses) == 1 for r in evaluation.reports)

    def test_height_zero_and_baseline_score_identically(self, vector_config, tmp_path):
        flat = vector_config(**{"tree.height": 0})
        baseline = flat.updated(**{"loss.kind": "baseline"})
        scores = {}
        for name, config in (("h0", flat), ("baseline", baseline)):
            data = prepare_experiment(config)
            result = train(config, data=data, output_dir=tmp_path / name)
            scores[name] = evaluate(result.best_checkpoint, config, data=data).reports

        assert [r.f1 for r in scores["h0"]] == [r.f1 for r in scores["baseline"]]
        assert [r.severity for r in scores["h0"]] == [r.severity for r in scores["baseline"]]
        assert [r.confusion for r in scores["h0"]] == [r.confusion for r in scores["baseline"]]
        assert 'error' in compare_reports(scores["h0"], scores["baseline"])['f1_test']

    def test_backbone_mismatch_raises(self, trained):
        config, data, result = trained
        other = config.updated(**{"backbone.embedding_dim": 4})
        with pytest.raises(DataError):
            evaluate(result.best_checkpoint, other, data=data)

    def test_too_many_classes_raises(self, trained):
        config, data, result = trained
        wide = config.updated(**{"evaluation.way": 7})
        with pytest.raises(EpisodeError):
            evaluate(result.best_checkpoint, wide, data=data)


class TestReports:
    """Summaries, files and tables"""

    def test_summary_statistics(self):
        reports = [report(0, 0.2), report(1, 0.4, severity=2.0), report(2, 0.6, severity=1.0), report(3, 0.8)]
        summary = summarize(reports)
        assert summary['f1_mean'] == pytest.approx(0.5)
        assert summary['f1_median'] == pytest.approx(0.5)
        assert summary['f1_min'] == 0.2 and summary['f1_max'] == 0.8
        assert summary['severity_mean'] == pytest.approx(1.5)
        assert summary['episodes_with_mistakes'] == 2
        assert summary['per_class_f1']['a'] == pytest.approx(0.5)

    def test_summary_without_mistakes(self):
        assert summarize([report(0, 1.0)])['severity_mean'] is None

    def test_write_and_read(self, tmp_path):
        reports = [report(0, 0.5, severity=1.0), report(1, 0.75)]
        generator = ReportGenerator(tmp_path)
        path = generator.write_reports("model_N4", reports, metadata={'variant': 'model'})
        assert path == tmp_path / "reports" / "model_N4.jsonl"
        assert read_reports(path) == reports

        summary = json.loads((tmp_path / "reports" / "model_N4.summary.json").read_text())
        assert summary['name'] == "model_N4"
        assert summary['metadata'] == {'variant': 'model'}

    def test_missing_report_file_raises(self, tmp_path):
        with pytest.raises(DataError):
            read_reports(tmp_path / "absent.jsonl")

    def test_malformed_lines_raise(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{not json}\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_reports(path)
        path.write_text(json.dumps({"seed": 1}) + "\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_reports(path)

    def test_csv_export(self, tmp_path):
        reports = {"H0": [report(0, 0.5), report(1, 0.6)], "H2": [report(0, 0.7, severity=1.0)]}
        frame = reports_frame(reports)
        assert list(frame.columns) == ['variant', 'seed', 'shots', 'f1', 'severity', 'mistakes']
        assert frame['severity'].isna().sum() == 2

        path = ReportGenerator(tmp_path).export_csv(reports, "table.csv")
        assert len(pd.read_csv(path)) == 3


class TestCompareReports:
    """Paired comparisons"""

    def test_better_model_has_small_p_value(self):
        rng = np.random.default_rng(0)
        base = rng.uniform(0.3, 0.6, size=40)
        better = [report(i, f + 0.2, severity=1.0) for i, f in enumerate(base)]
        worse = [report(i, f, severity=2.0 + (i % 3)) for i, f in enumerate(base)]
        comparison = compare_reports(better, worse)
        assert comparison['episodes'] == 40
        assert comparison['f1_test']['p_value'] < 1e-6
        assert comparison['severity_test']['alternative'] == "less"
        assert comparison['severity_test']['p_value'] < 1e-6
        assert comparison['per_class_f1_difference']['a'] == pytest.approx(0.2)

    def test_identical_reports_record_the_error(self):
        reports = [report(i, 0.5) for i in range(5)]
        comparison = compare_reports(reports, reports)
        assert 'error' in comparison['f1_test']
        assert comparison['severity_mean_a'] is None

    def test_unpaired_reports_raise(self):
        with pytest.raises(DataError):
            compare_reports([report(0, 0.5)], [report(1, 0.5)])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

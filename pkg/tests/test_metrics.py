import math

import numpy as np
import pytest

from lsme.errors import UndefinedMetricError
from lsme.metrics import (
    EpisodeMetrics,
    RunningStats,
    aggregate,
    lowshot_accuracy,
    mean_iou,
    render_table,
    support_accuracy,
)


class TestSupportAccuracy:
    def test_all_correct(self):
        assert support_accuracy([True] * 5) == 1.0

    def test_three_of_five(self):
        assert support_accuracy([True, True, False, True, False]) == pytest.approx(0.6)

    def test_single_wrong(self):
        assert support_accuracy([False]) == 0.0

    def test_empty_undefined(self):
        with pytest.raises(UndefinedMetricError):
            support_accuracy([])


class TestLowshotAccuracy:
    def test_all_correct(self):
        assert lowshot_accuracy([True] * 15) == 1.0

    def test_nine_of_fifteen(self):
        assert lowshot_accuracy([True] * 9 + [False] * 6) == pytest.approx(0.6)

    def test_empty_undefined(self):
        with pytest.raises(UndefinedMetricError):
            lowshot_accuracy([])


class TestMeanIou:
    def test_perfect(self):
        assert mean_iou([1.0, 1.0, 1.0], 3) == 1.0

    def test_all_unmatched(self):
        assert mean_iou([], 2) == 0.0

    def test_partial_match(self):
        # two ground-truth objects, one matched at 0.8, one missed -> 0.4
        assert mean_iou([0.8], 2) == pytest.approx(0.4)

    def test_too_many_pairs_rejected(self):
        with pytest.raises(ValueError):
            mean_iou([1.0, 1.0], 1)


class TestEpisodeMetrics:
    def test_range_checked(self):
        with pytest.raises(ValueError):
            EpisodeMetrics(lsa=1.2)

    def test_optional_fields(self):
        m = EpisodeMetrics(lsa=0.5)
        assert m.sa is None
        assert m.to_dict() == {
            "sa": None, "lsa": 0.5, "miou_support": None, "miou_query": None
        }


class TestRunningStats:
    def test_matches_numpy(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 1, size=137)
        stats = RunningStats()
        for v in values:
            stats.add(float(v))
        assert stats.mean == pytest.approx(values.mean(), abs=1e-12)
        assert stats.sample_std == pytest.approx(values.std(ddof=1), abs=1e-12)

    def test_merge_equals_direct(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 1, size=200)
        whole = RunningStats()
        for v in values:
            whole.add(float(v))
        left, right = RunningStats(), RunningStats()
        for v in values[:70]:
            left.add(float(v))
        for v in values[70:]:
            right.add(float(v))
        left.merge(right)
        assert left.count == whole.count
        assert left.mean == pytest.approx(whole.mean, abs=1e-12)
        assert left.sample_std == pytest.approx(whole.sample_std, abs=1e-12)


class TestAggregate:
    def test_constant_values(self):
        report = aggregate([EpisodeMetrics(lsa=0.7) for _ in range(10)])
        summary = report.summary("lsa")
        assert summary.mean == pytest.approx(0.7)
        assert summary.ci95 == 0.0

    def test_zero_one_pair(self):
        report = aggregate([EpisodeMetrics(lsa=0.0), EpisodeMetrics(lsa=1.0)])
        summary = report.summary("lsa")
        assert summary.mean == pytest.approx(0.5)
        # sample std = sqrt(0.5); CI = 1.96 * 0.7071 / sqrt(2) ~ 0.980
        assert summary.ci95 == pytest.approx(1.96 * math.sqrt(0.5) / math.sqrt(2), abs=1e-9)
        assert summary.ci95 == pytest.approx(0.980, abs=1e-3)

    def test_bernoulli_ci_scale(self):
        # Monte-Carlo oracle: E=500 Bernoulli(0.5) episode values produce a
        # CI near 1.96 * 0.5 / sqrt(500), within 20%.
        rng = np.random.default_rng(42)
        report = aggregate(
            [EpisodeMetrics(lsa=float(rng.integers(0, 2))) for _ in range(500)]
        )
        expected = 1.96 * 0.5 / math.sqrt(500)
        assert report.summary("lsa").ci95 == pytest.approx(expected, rel=0.2)

    def test_missing_metrics_excluded(self):
        report = aggregate([EpisodeMetrics(lsa=0.5, sa=None)])
        assert report.summary("sa") is None
        assert report.to_dict()["metrics"]["sa"] is None

    def test_config_echoed(self):
        report = aggregate([EpisodeMetrics(lsa=1.0)], config={"variant": "lsme"})
        assert report.config == {"variant": "lsme"}


class TestRenderTable:
    def test_na_for_missing_metrics(self):
        report = aggregate([EpisodeMetrics(lsa=0.5) for _ in range(3)])
        table = render_table([("categ-mobj", report)])
        lines = table.strip().split("\n")
        assert lines[0].split()[:3] == ["variant", "LSA", "SA"]
        assert "N/A" in lines[1]
        assert "0.5000" in lines[1]

    def test_multiple_rows_aligned(self):
        r1 = aggregate([EpisodeMetrics(lsa=0.5, sa=0.4) for _ in range(3)])
        r2 = aggregate([EpisodeMetrics(lsa=0.25) for _ in range(3)])
        table = render_table([("categ-mobj-suppassign", r1), ("categ-mobj", r2)])
        assert len(table.strip().split("\n")) == 3

"""Per-episode metrics and cross-episode aggregation.

Support accuracy (SA) is the fraction of support scenes whose novel object
was identified correctly; low-shot accuracy (LSA) the fraction of eligible
query objects labeled correctly; mIoU averages matched prediction/truth
overlaps with unmatched ground-truth objects counting as zero. Aggregates
report mean and a 95% normal-approximation confidence half-width
(1.96 * sample std / sqrt(E)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import UndefinedMetricError

Z_95 = 1.96

METRIC_NAMES = ("sa", "lsa", "miou_support", "miou_query")


@dataclass(frozen=True)
class EpisodeMetrics:
    lsa: float
    sa: float | None = None
    miou_support: float | None = None
    miou_query: float | None = None

    def __post_init__(self) -> None:
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def support_accuracy(outcomes: Sequence[bool]) -> float:
    """Fraction of support scenes whose chosen object is the true novel one."""
    if not outcomes:
        raise UndefinedMetricError("no support assignments to score")
    return sum(bool(o) for o in outcomes) / len(outcomes)


def lowshot_accuracy(outcomes: Sequence[bool]) -> float:
    """Fraction of eligible query objects with predicted == true label."""
    if not outcomes:
        raise UndefinedMetricError("no eligible query predictions in episode")
    return sum(bool(o) for o in outcomes) / len(outcomes)


def mean_iou(matched_ious: Sequence[float], num_ground_truth: int) -> float:
    """Mean IoU over ground-truth objects; unmatched ones contribute 0."""
    if num_ground_truth < 1:
        raise UndefinedMetricError("no ground-truth objects to score")
    if len(matched_ious) > num_ground_truth:
        raise ValueError("more matched pairs than ground-truth objects")
    return float(sum(matched_ious)) / num_ground_truth


class RunningStats:
    """Streaming mean/variance with a numerically stable parallel combine."""

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self._m2 = other.count, other.mean, other._m2
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self._m2 += other._m2 + delta * delta * self.count * other.count / total
        self.count = total
        return self

    @property
    def sample_std(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self._m2 / (self.count - 1))

    @property
    def ci95(self) -> float:
        if self.count < 2:
            return 0.0
        return Z_95 * self.sample_std / math.sqrt(self.count)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci95: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci95": self.ci95, "count": self.count}


@dataclass(frozen=True)
class AggregateReport:
    metrics: dict[str, MetricSummary]
    episodes: int
    config: dict = field(default_factory=dict)

    def summary(self, name: str) -> MetricSummary | None:
        return self.metrics.get(name)

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "metrics": {
                name: (self.metrics[name].to_dict() if name in self.metrics else None)
                for name in METRIC_NAMES
            },
            "config": self.config,
        }


def aggregate(
    episode_metrics: Iterable[EpisodeMetrics], config: dict | None = None
) -> AggregateReport:
    """Mean and 95% CI half-width per metric; N/A metrics are left out."""
    stats = {name: RunningStats() for name in METRIC_NAMES}
    episodes = 0
    for em in episode_metrics:
        episodes += 1
        for name in METRIC_NAMES:
            value = getattr(em, name)
            if value is not None:
                stats[name].add(value)
    summaries = {
        name: MetricSummary(mean=s.mean, ci95=s.ci95, count=s.count)
        for name, s in stats.items()
        if s.count > 0
    }
    return AggregateReport(
        metrics=summaries, episodes=episodes, config=dict(config or {})
    )


_COLUMNS = (("lsa", "LSA"), ("sa", "SA"), ("miou_support", "mIoU-sup"), ("miou_query", "mIoU-qry"))


def render_table(rows: Sequence[tuple[str, AggregateReport]]) -> str:
    """Aligned text table: one row per variant, one column per metric."""
    header = ["variant"] + [label for _, label in _COLUMNS]
    lines = [header]
    for label, report in rows:
        cells = [label]
        for name, _ in _COLUMNS:
            summary = report.summary(name)
            if summary is None:
                cells.append("N/A")
            else:
                cells.append(f"{summary.mean:.4f} ±{summary.ci95:.4f}")
        lines.append(cells)
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in lines
    ) + "\n"

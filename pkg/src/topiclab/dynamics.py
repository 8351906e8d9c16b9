"""Per-topic time series and the statistical tests over them.

Bins are consecutive month spans anchored at the window start, so the
partition is deterministic for any granularity. Relative frequency divides
by all documents in the bin (noise included); ranking is competition-style
over valid topics. The tests are rank-based (Kruskal-Wallis, Dunn with
multiplicity corrections) plus the exact binomial McNemar test on
discordant pair counts.
"""

from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, norm, binom

__all__ = [
    "BinStat",
    "TopicTimeSeries",
    "IntervalSpec",
    "TestResult",
    "PairwiseTestResult",
    "add_months",
    "bin_starts",
    "bin_documents",
    "relative_and_rank",
    "kruskal_wallis",
    "dunn_test",
    "mcnemar_exact",
    "compare_intervals",
    "save_series_csv",
    "load_series_csv",
]

GRANULARITIES = (1, 3, 6, 12)


@dataclass
class BinStat:
    bin_id: int
    start_date: dt.date
    count: int
    relative: float = 0.0
    rank: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "bin_id": self.bin_id,
            "start_date": self.start_date.isoformat(),
            "count": self.count,
            "relative": self.relative,
            "rank": self.rank,
        }


@dataclass
class TopicTimeSeries:
    topic_id: int
    granularity_months: int
    bins: list[BinStat] = field(default_factory=list)

    def counts(self) -> list[int]:
        return [b.count for b in self.bins]

    def to_json_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "granularity_months": self.granularity_months,
            "bins": [b.to_json_dict() for b in self.bins],
        }


@dataclass(frozen=True)
class IntervalSpec:
    start_bin: int
    end_bin: int

    def __post_init__(self):
        if self.start_bin > self.end_bin:
            raise ValueError("interval start must not exceed end")
        if self.start_bin < 0:
            raise ValueError("interval bins must be non-negative")

    def bins(self) -> range:
        return range(self.start_bin, self.end_bin + 1)

    def overlaps(self, other: "IntervalSpec") -> bool:
        return self.start_bin <= other.end_bin and other.start_bin <= self.end_bin


@dataclass
class TestResult:
    test: str
    statistic: float
    p_value: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_json_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
        }


@dataclass
class PairwiseTestResult:
    correction: str
    pairs: list[tuple[int, int, float, float]]   # (i, j, raw_p, adjusted_p)

    def to_json_dict(self) -> dict:
        return {
            "correction": self.correction,
            "pairs": [
                {"interval_i": i, "interval_j": j, "raw_p": raw, "adjusted_p": adj}
                for i, j, raw, adj in self.pairs
            ],
        }


def add_months(date: dt.date, months: int) -> dt.date:
    total = date.month - 1 + months
    year = date.year + total // 12
    month = total % 12 + 1
    day = min(date.day, calendar.monthrange(year, month)[1])
    return dt.date(year, month, day)


def bin_starts(window_start: dt.date, window_end: dt.date, granularity_months: int) -> list[dt.date]:
    """Start dates of the consecutive bins covering the window."""
    if granularity_months not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    if window_start > window_end:
        raise ValueError("window_start must not exceed window_end")
    starts = []
    cur = window_start
    k = 0
    while cur <= window_end:
        starts.append(cur)
        k += 1
        cur = add_months(window_start, k * granularity_months)
    return starts


def _bin_index(date: dt.date, starts: list[dt.date], window_start: dt.date,
               granularity_months: int) -> int:
    months = (date.year - window_start.year) * 12 + (date.month - window_start.month)
    k = months // granularity_months
    k = max(0, min(k, len(starts) - 1))
    # day-of-month clamping can push the estimate off by one bin
    while k > 0 and date < starts[k]:
        k -= 1
    while k + 1 < len(starts) and date >= starts[k + 1]:
        k += 1
    return k


def bin_documents(
    doc_dates: list[dt.date],
    labels,
    granularity_months: int,
    window_start: dt.date,
    window_end: dt.date,
) -> dict[int, TopicTimeSeries]:
    """Per-topic binned counts over the window, noise topic -1 included.

    Every document must fall inside the window; each lands in exactly one
    bin. Relative frequencies and ranks are left for
    :func:`relative_and_rank`.
    """
    labels = [int(l) for l in labels]
    if len(doc_dates) != len(labels):
        raise ValueError("doc_dates and labels must align")
    starts = bin_starts(window_start, window_end, granularity_months)
    topics = sorted(set(labels) | {-1})
    counts = {t: [0] * len(starts) for t in topics}
    for date, label in zip(doc_dates, labels):
        if not (window_start <= date <= window_end):
            raise ValueError(f"document date {date} outside window")
        counts[label][_bin_index(date, starts, window_start, granularity_months)] += 1
    return {
        t: TopicTimeSeries(
            topic_id=t,
            granularity_months=granularity_months,
            bins=[
                BinStat(bin_id=i, start_date=starts[i], count=counts[t][i])
                for i in range(len(starts))
            ],
        )
        for t in topics
    }


def relative_and_rank(series_set: dict[int, TopicTimeSeries]) -> dict[int, TopicTimeSeries]:
    """Fill relative frequencies and competition ranks in place.

    Totals include the noise topic; ranking excludes it. Empty bins keep
    relative 0 and no rank.
    """
    if not series_set:
        return series_set
    n_bins = len(next(iter(series_set.values())).bins)
    valid = sorted(t for t in series_set if t >= 0)
    for i in range(n_bins):
        total = sum(series_set[t].bins[i].count for t in series_set)
        valid_counts = [series_set[t].bins[i].count for t in valid]
        for t, series in series_set.items():
            stat = series.bins[i]
            stat.relative = stat.count / total if total else 0.0
            if t >= 0 and total:
                stat.rank = 1 + sum(1 for c in valid_counts if c > stat.count)
            else:
                stat.rank = None
    return series_set


def _midranks(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ranks with ties averaged; also the tie-group sizes."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ties = []
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for idx in range(i, j + 1):
            ranks[order[idx]] = avg
        ties.append(j - i + 1)
        i = j + 1
    return ranks, np.asarray(ties, dtype=np.float64)


def kruskal_wallis(groups: list[list[float]], alpha: float = 0.05) -> TestResult:
    """Rank-based k-sample test with midrank tie correction.

    All-identical pooled values short-circuit to H = 0, p = 1.
    """
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    if any(len(g) == 0 for g in groups):
        raise ValueError("groups must be non-empty")
    pooled = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
    n = len(pooled)
    if n < 3:
        raise ValueError("need at least 3 values in total")
    if np.all(pooled == pooled[0]):
        return TestResult(test="kruskal-wallis", statistic=0.0, p_value=1.0, alpha=alpha)
    ranks, ties = _midranks(pooled)
    h = 0.0
    offset = 0
    for g in groups:
        ni = len(g)
        mean_rank = ranks[offset : offset + ni].mean()
        h += ni * (mean_rank - (n + 1) / 2.0) ** 2
        offset += ni
    h *= 12.0 / (n * (n + 1))
    correction = 1.0 - float(np.sum(ties**3 - ties)) / (n**3 - n)
    h /= correction
    p = float(chi2.sf(h, len(groups) - 1))
    return TestResult(test="kruskal-wallis", statistic=float(h), p_value=p, alpha=alpha)


def _holm(raw: list[float]) -> list[float]:
    m = len(raw)
    order = sorted(range(m), key=lambda i: raw[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        candidate = min(1.0, (m - rank) * raw[idx])
        running = max(running, candidate)
        adjusted[idx] = running
    return adjusted


def dunn_test(
    groups: list[list[float]], correction: str = "bonferroni", alpha: float = 0.05
) -> PairwiseTestResult:
    """Pairwise rank comparisons after an omnibus test, on pooled midranks.

    Supports Bonferroni and Holm adjustments; adjusted p-values are capped
    at 1 and never below the raw values.
    """
    if len(groups) < 3:
        raise ValueError("need at least 3 groups")
    if any(len(g) == 0 for g in groups):
        raise ValueError("groups must be non-empty")
    if correction not in ("bonferroni", "holm"):
        raise ValueError("correction must be 'bonferroni' or 'holm'")
    pooled = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
    n = len(pooled)
    ranks, ties = _midranks(pooled)
    mean_ranks = []
    offset = 0
    for g in groups:
        mean_ranks.append(ranks[offset : offset + len(g)].mean())
        offset += len(g)
    variance = n * (n + 1) / 12.0 - float(np.sum(ties**3 - ties)) / (12.0 * (n - 1))

    raw: list[float] = []
    pairs: list[tuple[int, int]] = []
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            se_sq = variance * (1.0 / len(groups[i]) + 1.0 / len(groups[j]))
            if se_sq <= 0:
                z = 0.0
            else:
                z = (mean_ranks[i] - mean_ranks[j]) / np.sqrt(se_sq)
            raw.append(float(2.0 * norm.sf(abs(z))))
            pairs.append((i, j))
    m = len(raw)
    if correction == "bonferroni":
        adjusted = [min(1.0, p * m) for p in raw]
    else:
        adjusted = _holm(raw)
    return PairwiseTestResult(
        correction=correction,
        pairs=[(i, j, raw[idx], adjusted[idx]) for idx, (i, j) in enumerate(pairs)],
    )


def mcnemar_exact(b: int, c: int, alpha: float = 0.05) -> TestResult:
    """Exact binomial McNemar test on discordant pair counts.

    Statistic is min(b, c); the two-sided p doubles the lower binomial tail
    at n = b + c, capped at 1.
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    if b + c == 0:
        raise ValueError("need at least one discordant pair")
    statistic = float(min(b, c))
    p = min(1.0, 2.0 * float(binom.cdf(min(b, c), b + c, 0.5)))
    return TestResult(test="mcnemar-exact", statistic=statistic, p_value=p, alpha=alpha)


def save_series_csv(path: str, series_set: dict[int, TopicTimeSeries]) -> None:
    """Columnar export: topic_id, bin_id, start_date, count, relative, rank.

    Relative frequencies are written with shortest-round-trip formatting so
    a reload reproduces the exact values. Written atomically.
    """
    import csv
    import os

    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "bin_id", "start_date", "count", "relative", "rank"])
        for topic_id in sorted(series_set):
            for stat in series_set[topic_id].bins:
                writer.writerow(
                    [
                        topic_id,
                        stat.bin_id,
                        stat.start_date.isoformat(),
                        stat.count,
                        repr(stat.relative),
                        "" if stat.rank is None else stat.rank,
                    ]
                )
    os.replace(tmp, path)


def load_series_csv(path: str, granularity_months: int) -> dict[int, TopicTimeSeries]:
    import csv

    out: dict[int, TopicTimeSeries] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            topic_id = int(row["topic_id"])
            series = out.setdefault(
                topic_id,
                TopicTimeSeries(topic_id=topic_id, granularity_months=granularity_months),
            )
            series.bins.append(
                BinStat(
                    bin_id=int(row["bin_id"]),
                    start_date=dt.date.fromisoformat(row["start_date"]),
                    count=int(row["count"]),
                    relative=float(row["relative"]),
                    rank=int(row["rank"]) if row["rank"] else None,
                )
            )
    for series in out.values():
        series.bins.sort(key=lambda b: b.bin_id)
    return out


def compare_intervals(
    series: TopicTimeSeries,
    intervals: list[IntervalSpec],
    alpha: float = 0.05,
    use_relative: bool = True,
) -> tuple[TestResult, PairwiseTestResult | None]:
    """Test whether the series differs across the given bin intervals.

    Two intervals run the omnibus rank test alone; more than two add the
    pairwise comparisons when the omnibus is significant.
    """
    if len(intervals) < 2:
        raise ValueError("need at least 2 intervals")
    n_bins = len(series.bins)
    for iv in intervals:
        if iv.end_bin >= n_bins:
            raise ValueError(f"interval {iv} outside series range")
    for i in range(len(intervals)):
        for j in range(i + 1, len(intervals)):
            if intervals[i].overlaps(intervals[j]):
                raise ValueError(f"intervals {intervals[i]} and {intervals[j]} overlap")
    groups = [
        [
            series.bins[b].relative if use_relative else float(series.bins[b].count)
            for b in iv.bins()
        ]
        for iv in intervals
    ]
    omnibus = kruskal_wallis(groups, alpha=alpha)
    pairwise = None
    if len(intervals) > 2 and omnibus.significant:
        pairwise = dunn_test(groups, correction="bonferroni", alpha=alpha)
    return omnibus, pairwise

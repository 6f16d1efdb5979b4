"""Metrics, the paired-seed comparison framework, and the typicality
distribution-shift analysis.

Strategies are compared by paired t-scores over seeds: at each round the
per-seed metric differences give t = sqrt(L) * mean / std (std with the L-1
denominator), and the win rate is the fraction of rounds where t clears a
critical threshold.  The default threshold 2.776 is the two-sided 95% value
used with four seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import FeatureDataset, ClientPartition
from .geometry import typicality
from .model import ModelParams, predict

# Two-sided 95% critical values of Student's t by degrees of freedom.
T_CRITICAL_95 = {3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262}

DEFAULT_T_THRESHOLD = 2.776

METRICS = ("accuracy", "balanced_recall")

HISTOGRAM_BINS = 50


def accuracy(params: ModelParams, test: FeatureDataset) -> float:
    """Fraction of argmax-correct predictions on the test set."""
    if test.n == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(params, test.features) == test.labels))


def balanced_recall(params: ModelParams, test: FeatureDataset) -> float:
    """Unweighted mean of per-class recall over classes present in the test set."""
    if test.n == 0:
        raise ValueError("empty test set")
    pred = predict(params, test.features)
    recalls = []
    for c in range(test.num_classes):
        mask = test.labels == c
        if mask.any():
            recalls.append(float(np.mean(pred[mask] == c)))
    return float(np.mean(recalls))


@dataclass
class RunResult:
    """One strategy's metric trajectory under one seed."""

    strategy: str
    seed: int
    metric: str
    values: np.ndarray   # (R,) value at round r = 1..R

    @property
    def rounds(self) -> int:
        return len(self.values)


def t_score(a_i: np.ndarray, a_j: np.ndarray) -> float:
    """Paired t statistic of strategy i over strategy j across seeds.

    t = sqrt(L) * mean(d) / std(d) with d = a_i - a_j and the sample standard
    deviation (L-1 denominator).  A degenerate std of 0 yields +inf when the
    mean is positive, -inf when negative, and 0 when the mean is 0 too.
    """
    a_i = np.asarray(a_i, dtype=np.float64)
    a_j = np.asarray(a_j, dtype=np.float64)
    if a_i.shape != a_j.shape:
        raise ValueError("paired series must have equal length")
    count = len(a_i)
    if count < 2:
        raise ValueError("need at least 2 seeds for a paired t-score")
    diffs = a_i - a_j
    mu = float(diffs.mean())
    sigma = float(diffs.std(ddof=1))
    if sigma == 0.0:
        if mu > 0:
            return math.inf
        if mu < 0:
            return -math.inf
        return 0.0
    return math.sqrt(count) * mu / sigma


@dataclass
class ComparisonReport:
    """Per-round t-scores of one strategy pair plus win/defeat rates."""

    strategy_i: str
    strategy_j: str
    metric: str
    threshold: float
    rounds: list[int]
    t_scores: list[float]
    win_rate: float      # fraction of rounds with t > threshold
    defeat_rate: float   # fraction of rounds with -t > threshold

    def wins(self) -> list[bool]:
        return [t > self.threshold for t in self.t_scores]

    def defeats(self) -> list[bool]:
        return [-t > self.threshold for t in self.t_scores]


def _stack_results(results: list[RunResult]) -> tuple[str, str, list[int], np.ndarray]:
    if not results:
        raise ValueError("no run results given")
    strategy = results[0].strategy
    metric = results[0].metric
    rounds = results[0].rounds
    for r in results:
        if r.strategy != strategy or r.metric != metric or r.rounds != rounds:
            raise ValueError("run results mix strategies, metrics, or round counts")
    ordered = sorted(results, key=lambda r: r.seed)
    seeds = [r.seed for r in ordered]
    if len(set(seeds)) != len(seeds):
        raise ValueError("duplicate seed in run results")
    return strategy, metric, seeds, np.stack([r.values for r in ordered])


def win_rate(results_i: list[RunResult], results_j: list[RunResult],
             threshold: float = DEFAULT_T_THRESHOLD) -> ComparisonReport:
    """Compare two strategies' per-seed trajectories round by round.

    Win rate is the fraction of rounds whose paired t-score exceeds the
    threshold; the defeat rate mirrors it with the roles swapped.  A round
    can never count for both (threshold > 0).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    name_i, metric_i, seeds_i, vals_i = _stack_results(results_i)
    name_j, metric_j, seeds_j, vals_j = _stack_results(results_j)
    if metric_i != metric_j:
        raise ValueError(f"metric mismatch: {metric_i} vs {metric_j}")
    if seeds_i != seeds_j:
        raise ValueError("seed sets differ between strategies")
    if vals_i.shape != vals_j.shape:
        raise ValueError("round counts differ between strategies")

    num_rounds = vals_i.shape[1]
    scores = [t_score(vals_i[:, r], vals_j[:, r]) for r in range(num_rounds)]
    wins = sum(1 for t in scores if t > threshold)
    defeats = sum(1 for t in scores if -t > threshold)
    return ComparisonReport(
        strategy_i=name_i,
        strategy_j=name_j,
        metric=metric_i,
        threshold=threshold,
        rounds=list(range(1, num_rounds + 1)),
        t_scores=scores,
        win_rate=wins / num_rounds,
        defeat_rate=defeats / num_rounds,
    )


@dataclass
class ShiftReport:
    """Centralized vs within-client typicality of every dataset point."""

    neighbors: int           # requested K (capped per client as needed)
    threshold: float
    bin_edges: np.ndarray    # (HISTOGRAM_BINS + 1,) shared by both views
    central_counts: np.ndarray
    client_counts: np.ndarray
    central_mean: float
    client_mean: float
    per_client_means: list[float]
    retention: float         # NaN when no point clears the threshold centrally

    @property
    def num_points(self) -> int:
        return int(self.central_counts.sum())


def typicality_shift_report(dataset: FeatureDataset, partitions: list[ClientPartition],
                            neighbors: int = 20, threshold: float = 1.0) -> ShiftReport:
    """Quantify how partitioning depresses typicality.

    Every point's typicality is computed twice: over the whole dataset and
    within its own client's subset (K capped at subset size - 1).  Both views
    share histogram bin edges from 0 to twice the centralized maximum;
    values are clipped into that range so counts always sum to N.  Retention
    is the fraction of points above the threshold centrally that stay above
    it in their client view.
    """
    if neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    stacked = np.concatenate([p.indices for p in partitions]) if partitions else np.empty(0)
    if not np.array_equal(np.sort(stacked), np.arange(dataset.n)):
        raise ValueError("partitions must cover every dataset row exactly once")
    central = typicality(dataset.features, min(neighbors, dataset.n - 1))
    within = np.empty(dataset.n, dtype=np.float64)
    per_client_means = []
    for part in partitions:
        size = len(part.indices)
        if size < 2:
            raise ValueError(f"client {part.client_id} has {size} point(s); need >= 2")
        k_eff = max(1, min(neighbors, size - 1))
        vals = typicality(dataset.features[part.indices], k_eff)
        within[part.indices] = vals
        per_client_means.append(float(vals.mean()))

    edges = np.linspace(0.0, 2.0 * float(central.max()), HISTOGRAM_BINS + 1)
    central_counts, _ = np.histogram(np.clip(central, edges[0], edges[-1]), bins=edges)
    client_counts, _ = np.histogram(np.clip(within, edges[0], edges[-1]), bins=edges)

    high = central > threshold
    retention = float(np.mean(within[high] > threshold)) if high.any() else math.nan
    return ShiftReport(
        neighbors=neighbors,
        threshold=threshold,
        bin_edges=edges,
        central_counts=central_counts,
        client_counts=client_counts,
        central_mean=float(central.mean()),
        client_mean=float(within.mean()),
        per_client_means=per_client_means,
        retention=retention,
    )

"""CSV persistence for run results, comparison reports, shift reports, and
plot-ready tables.

Floats are written with shortest round-trip repr so that writing and
re-parsing a file reproduces the exact same values (the basis of the
byte-identical determinism contract).  Infinities appear as ``inf``/``-inf``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataFormatError
from .evaluation import ComparisonReport, RunResult, ShiftReport

RESULTS_HEADER = ["strategy", "seed", "round", "labeled_per_client",
                  "accuracy", "balanced_recall"]
COMPARISON_HEADER = ["strategy_i", "strategy_j", "metric", "round", "t_score",
                     "win", "defeat"]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "centralized_count",
                    "within_client_count"]
SUMMARY_HEADER = ["key", "value"]
CURVE_HEADER = ["strategy", "round", "mean", "stderr", "seeds"]
WINRATE_HEADER = ["strategy_i", "strategy_j", "metric", "win_rate", "defeat_rate"]
PLOT_HISTOGRAM_HEADER = ["bin_center", "centralized_count", "within_client_count"]


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class ResultRow:
    """One (strategy, seed, round) line of a results file."""

    strategy: str
    seed: int
    round: int
    labeled_per_client: int
    accuracy: float
    balanced_recall: float


def results_to_csv(rows: list[ResultRow]) -> str:
    lines = [",".join(RESULTS_HEADER)]
    for r in rows:
        lines.append(",".join([
            r.strategy, str(r.seed), str(r.round), str(r.labeled_per_client),
            _fmt(r.accuracy), _fmt(r.balanced_recall),
        ]))
    return "\n".join(lines) + "\n"


def _read_rows(text: str, expected_header: list[str], kind: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [tok.strip() for tok in next(reader)]
    except StopIteration:
        raise DataFormatError(f"empty {kind} file") from None
    if header != expected_header:
        raise DataFormatError(f"{kind} header must be {','.join(expected_header)}")
    for lineno, row in enumerate(reader, start=2):
        if not row or row[0].startswith("#"):
            continue
        if len(row) != len(expected_header):
            raise DataFormatError(f"line {lineno}: expected {len(expected_header)} cells")
        yield lineno, row


def results_from_csv(text: str) -> list[ResultRow]:
    rows = []
    for lineno, row in _read_rows(text, RESULTS_HEADER, "results"):
        try:
            rows.append(ResultRow(
                strategy=row[0],
                seed=int(row[1]),
                round=int(row[2]),
                labeled_per_client=int(row[3]),
                accuracy=float(row[4]),
                balanced_recall=float(row[5]),
            ))
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric cell") from None
    if not rows:
        raise DataFormatError("results file has no rows")
    return rows


def load_results(path: str | Path) -> list[ResultRow]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    return results_from_csv(path.read_text(encoding="utf-8"))


def save_results(rows: list[ResultRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(results_to_csv(rows))


def rows_to_run_results(rows: list[ResultRow], metric: str) -> dict[str, list[RunResult]]:
    """Group result rows into per-strategy, per-seed round series.

    Rounds must form 1..R contiguously within every (strategy, seed) group.
    """
    if metric not in ("accuracy", "balanced_recall"):
        raise ValueError(f"unknown metric {metric!r}")
    groups: dict[tuple[str, int], dict[int, float]] = {}
    for r in rows:
        key = (r.strategy, r.seed)
        series = groups.setdefault(key, {})
        if r.round in series:
            raise DataFormatError(f"duplicate round {r.round} for {key}")
        series[r.round] = getattr(r, metric)
    out: dict[str, list[RunResult]] = {}
    for (strategy, seed), series in groups.items():
        rounds = sorted(series)
        if rounds != list(range(1, len(rounds) + 1)):
            raise DataFormatError(f"rounds for ({strategy}, seed {seed}) are not "
                                  "contiguous from 1")
        values = np.array([series[r] for r in rounds], dtype=np.float64)
        out.setdefault(strategy, []).append(
            RunResult(strategy=strategy, seed=seed, metric=metric, values=values))
    return out


def comparison_to_csv(report: ComparisonReport) -> str:
    lines = [",".join(COMPARISON_HEADER)]
    for rnd, t, win, defeat in zip(report.rounds, report.t_scores,
                                   report.wins(), report.defeats()):
        lines.append(",".join([
            report.strategy_i, report.strategy_j, report.metric, str(rnd),
            _fmt(t), str(int(win)), str(int(defeat)),
        ]))
    lines.append(f"# win_rate={_fmt(report.win_rate)} "
                 f"defeat_rate={_fmt(report.defeat_rate)} "
                 f"threshold={_fmt(report.threshold)}")
    return "\n".join(lines) + "\n"


def comparison_from_csv(text: str) -> ComparisonReport:
    rows = list(_read_rows(text, COMPARISON_HEADER, "comparison"))
    if not rows:
        raise DataFormatError("comparison file has no rounds")
    summary = {}
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line.lstrip("# ").split():
                key, _, val = tok.partition("=")
                summary[key] = float(val)
    if "threshold" not in summary:
        raise DataFormatError("comparison file is missing its summary line")
    strategy_i, strategy_j, metric = rows[0][1][0], rows[0][1][1], rows[0][1][2]
    rounds, scores = [], []
    for lineno, row in rows:
        if (row[0], row[1], row[2]) != (strategy_i, strategy_j, metric):
            raise DataFormatError(f"line {lineno}: mixed comparison rows")
        try:
            rounds.append(int(row[3]))
            scores.append(float(row[4]))
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric cell") from None
    return ComparisonReport(
        strategy_i=strategy_i,
        strategy_j=strategy_j,
        metric=metric,
        threshold=summary["threshold"],
        rounds=rounds,
        t_scores=scores,
        win_rate=summary["win_rate"],
        defeat_rate=summary["defeat_rate"],
    )


def save_comparison(report: ComparisonReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(comparison_to_csv(report))


def load_comparison(path: str | Path) -> ComparisonReport:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"comparison file not found: {path}")
    return comparison_from_csv(path.read_text(encoding="utf-8"))


def shift_histogram_to_csv(report: ShiftReport) -> str:
    lines = [",".join(HISTOGRAM_HEADER)]
    edges = report.bin_edges
    for i in range(len(edges) - 1):
        lines.append(",".join([
            _fmt(edges[i]), _fmt(edges[i + 1]),
            str(int(report.central_counts[i])), str(int(report.client_counts[i])),
        ]))
    return "\n".join(lines) + "\n"


def shift_summary_to_csv(report: ShiftReport) -> str:
    pairs: list[tuple[str, str]] = [
        ("num_points", str(report.num_points)),
        ("neighbors", str(report.neighbors)),
        ("threshold", _fmt(report.threshold)),
        ("centralized_mean", _fmt(report.central_mean)),
        ("within_client_mean", _fmt(report.client_mean)),
        ("retention", _fmt(report.retention)),
    ]
    for cid, mean in enumerate(report.per_client_means):
        pairs.append((f"client{cid}_mean", _fmt(mean)))
    lines = [",".join(SUMMARY_HEADER)]
    lines.extend(f"{key},{value}" for key, value in pairs)
    return "\n".join(lines) + "\n"


def parse_summary_csv(text: str) -> dict[str, str]:
    return {row[0]: row[1] for _, row in _read_rows(text, SUMMARY_HEADER, "summary")}


def parse_shift_histogram_csv(text: str) -> list[tuple[float, float, int, int]]:
    out = []
    for lineno, row in _read_rows(text, HISTOGRAM_HEADER, "histogram"):
        try:
            out.append((float(row[0]), float(row[1]), int(row[2]), int(row[3])))
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric cell") from None
    if not out:
        raise DataFormatError("histogram file has no rows")
    return out


def curves_csv(results_by_strategy: dict[str, list[RunResult]]) -> str:
    """Mean and standard error of the metric per strategy per round."""
    lines = [",".join(CURVE_HEADER)]
    for strategy in sorted(results_by_strategy):
        results = sorted(results_by_strategy[strategy], key=lambda r: r.seed)
        values = np.stack([r.values for r in results])   # (L, R)
        count = values.shape[0]
        means = values.mean(axis=0)
        if count > 1:
            stderr = values.std(axis=0, ddof=1) / math.sqrt(count)
        else:
            stderr = np.zeros(values.shape[1])
        for rnd in range(values.shape[1]):
            lines.append(",".join([
                strategy, str(rnd + 1), _fmt(means[rnd]), _fmt(stderr[rnd]),
                str(count),
            ]))
    return "\n".join(lines) + "\n"


def winrate_table_csv(reports: list[ComparisonReport]) -> str:
    lines = [",".join(WINRATE_HEADER)]
    for rep in reports:
        lines.append(",".join([
            rep.strategy_i, rep.strategy_j, rep.metric,
            _fmt(rep.win_rate), _fmt(rep.defeat_rate),
        ]))
    return "\n".join(lines) + "\n"


def plot_histogram_csv(bins: list[tuple[float, float, int, int]]) -> str:
    lines = [",".join(PLOT_HISTOGRAM_HEADER)]
    for left, right, central, client in bins:
        lines.append(",".join([
            _fmt((left + right) / 2.0), str(central), str(client),
        ]))
    return "\n".join(lines) + "\n"

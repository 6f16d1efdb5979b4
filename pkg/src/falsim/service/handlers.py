"""Endpoint bodies as plain functions over the schema types.

Handlers raise ValueError (or subclasses) for bad payloads and
FileNotFoundError for dangling file references; the app layer translates
those into HTTP status codes.  Keeping them as ordinary functions lets the
CLI call them in-process without a server.
"""

from __future__ import annotations

import math

from ..config import parse_config
from ..data import (
    PartitionSpec,
    dataset_from_csv,
    dirichlet_partition,
    format_class_table,
    partition_class_counts,
    partitions_from_csv,
    partitions_to_csv,
    synth_dataset,
    dataset_to_csv,
)
from ..evaluation import typicality_shift_report, win_rate
from ..experiments import run_from_config
from ..results import (
    comparison_from_csv,
    comparison_to_csv,
    curves_csv,
    parse_shift_histogram_csv,
    plot_histogram_csv,
    results_from_csv,
    results_to_csv,
    rows_to_run_results,
    shift_histogram_to_csv,
    shift_summary_to_csv,
    winrate_table_csv,
)
from . import schemas


def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    train, test = synth_dataset(req.num_classes, req.dim, req.per_class,
                                req.spread, req.seed)
    return schemas.SynthResponse(
        train_csv=dataset_to_csv(train),
        test_csv=dataset_to_csv(test),
        train_rows=train.n,
        test_rows=test.n,
    )


def partition(req: schemas.PartitionRequest) -> schemas.PartitionResponse:
    dataset = dataset_from_csv(req.dataset_csv)
    spec = PartitionSpec(alpha=req.alpha, num_clients=req.num_clients, seed=req.seed)
    parts = dirichlet_partition(dataset, spec)
    counts = partition_class_counts(dataset, parts)
    return schemas.PartitionResponse(
        partition_csv=partitions_to_csv(parts),
        class_counts=[[int(v) for v in row] for row in counts],
        table=format_class_table(counts),
    )


def run(req: schemas.RunRequest) -> schemas.RunResponse:
    cfg = parse_config(req.config_text)

    def loader(path: str) -> str:
        try:
            return req.files[path]
        except KeyError:
            raise FileNotFoundError(f"file not found in request payload: {path}") from None

    rows, flags = run_from_config(cfg, file_loader=loader, seeds=req.seeds,
                                  strategy=req.strategy)
    return schemas.RunResponse(results_csv=results_to_csv(rows), rows=len(rows),
                               flags=flags)


def compare(req: schemas.CompareRequest) -> schemas.CompareResponse:
    grouped_i = rows_to_run_results(results_from_csv(req.results_i_csv), req.metric)
    grouped_j = rows_to_run_results(results_from_csv(req.results_j_csv), req.metric)
    if len(grouped_i) != 1 or len(grouped_j) != 1:
        raise ValueError("each comparison input must hold exactly one strategy")
    (results_i,) = grouped_i.values()
    (results_j,) = grouped_j.values()
    report = win_rate(results_i, results_j, threshold=req.threshold)
    return schemas.CompareResponse(
        report_csv=comparison_to_csv(report),
        win_rate=report.win_rate,
        defeat_rate=report.defeat_rate,
        rounds=len(report.rounds),
    )


def shift(req: schemas.ShiftRequest) -> schemas.ShiftResponse:
    dataset = dataset_from_csv(req.dataset_csv)
    parts = partitions_from_csv(req.partition_csv)
    report = typicality_shift_report(dataset, parts, neighbors=req.neighbors,
                                     threshold=req.threshold)
    return schemas.ShiftResponse(
        histogram_csv=shift_histogram_to_csv(report),
        summary_csv=shift_summary_to_csv(report),
        centralized_mean=report.central_mean,
        within_client_mean=report.client_mean,
        retention=None if math.isnan(report.retention) else report.retention,
    )


def plotdata(req: schemas.PlotdataRequest) -> schemas.PlotdataResponse:
    if req.kind == "curves":
        if not req.results_csv:
            raise ValueError("curves plot data needs at least one results payload")
        rows = []
        for text in req.results_csv:
            rows.extend(results_from_csv(text))
        table = curves_csv(rows_to_run_results(rows, req.metric))
    elif req.kind == "winrate":
        if not req.comparison_csv:
            raise ValueError("winrate plot data needs at least one comparison payload")
        table = winrate_table_csv([comparison_from_csv(t) for t in req.comparison_csv])
    else:
        if not req.histogram_csv:
            raise ValueError("histogram plot data needs a shift histogram payload")
        table = plot_histogram_csv(parse_shift_histogram_csv(req.histogram_csv))
    return schemas.PlotdataResponse(table_csv=table)

"""From a parsed config to result rows: dataset assembly, partitioning,
per-client feature overrides, and multi-seed execution.

File access goes through an injectable loader (path -> text) so the same
code serves both the CLI (reading from disk) and the service layer (files
inlined in the request payload).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig, resolve_budget
from .data import (
    ClientPartition,
    FeatureDataset,
    dataset_from_csv,
    dirichlet_partition,
    partitions_from_csv,
    synth_dataset,
)
from .federation import FalSettings, run_experiment
from .results import ResultRow
from .strategies import get_strategy

FileLoader = Callable[[str], str]


def disk_loader(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return p.read_text(encoding="utf-8")


def build_dataset(cfg: ExperimentConfig,
                  file_loader: FileLoader = disk_loader,
                  ) -> tuple[FeatureDataset, FeatureDataset]:
    src = cfg.source
    if src.is_synthetic:
        return synth_dataset(src.synth_classes, src.synth_dim, src.synth_per_class,
                             src.synth_spread, src.synth_seed)
    train = dataset_from_csv(file_loader(src.train_path))
    test = dataset_from_csv(file_loader(src.test_path))
    if train.dim != test.dim:
        raise ValueError(f"train dim {train.dim} != test dim {test.dim}")
    if train.num_classes != test.num_classes:
        raise ValueError(f"train classes {train.num_classes} != test classes "
                         f"{test.num_classes}")
    return train, test


def build_partitions(cfg: ExperimentConfig, train: FeatureDataset,
                     file_loader: FileLoader = disk_loader) -> list[ClientPartition]:
    if cfg.partition_path is not None:
        partitions = partitions_from_csv(file_loader(cfg.partition_path))
        stacked = np.concatenate([p.indices for p in partitions])
        if not np.array_equal(np.sort(stacked), np.arange(train.n)):
            raise ValueError("partition file does not cover every train row exactly once")
        return partitions
    return dirichlet_partition(train, cfg.partition)


def build_feature_overrides(cfg: ExperimentConfig, train: FeatureDataset,
                            partitions: list[ClientPartition],
                            file_loader: FileLoader = disk_loader,
                            ) -> dict[int, np.ndarray]:
    """Load per-client replacement representations, aligned to client rows by id.

    Each override file uses the dataset CSV layout; its labels are ignored.
    Every row of the client's partition must appear in the file.
    """
    overrides: dict[int, np.ndarray] = {}
    by_id = {int(cid): path for cid, path in cfg.feature_paths.items()}
    known = {p.client_id for p in partitions}
    for cid in by_id:
        if cid not in known:
            raise ValueError(f"[features] client_{cid} has no matching partition")
    for part in partitions:
        path = by_id.get(part.client_id)
        if path is None:
            continue
        file_ds = dataset_from_csv(file_loader(path))
        row_of_id = {int(i): pos for pos, i in enumerate(file_ds.ids)}
        client_ids = train.ids[part.indices]
        missing = [int(i) for i in client_ids if int(i) not in row_of_id]
        if missing:
            raise ValueError(f"feature file for client {part.client_id} is missing "
                             f"id {missing[0]}")
        rows = [row_of_id[int(i)] for i in client_ids]
        overrides[part.client_id] = file_ds.features[rows]
    return overrides


def _seed_settings(cfg: ExperimentConfig, strategy: str, budget: int,
                   seed: int) -> FalSettings:
    return FalSettings(
        strategy=strategy,
        budget=budget,
        rounds=cfg.rounds,
        arch=cfg.arch,
        master_seed=seed,
        hidden_units=cfg.hidden_units,
        train=cfg.train,
        selector_choice=cfg.selector_choice,
        logo_micro_model=cfg.logo_micro_model,
        geometry=cfg.geometry,
        aggregation_weight=cfg.aggregation_weight,
        client_workers=cfg.client_workers,
    )


def run_from_config(cfg: ExperimentConfig,
                    file_loader: FileLoader = disk_loader,
                    seeds: list[int] | None = None,
                    strategy: str | None = None,
                    ) -> tuple[list[ResultRow], list[str]]:
    """Execute the configured experiment for every seed.

    Seeds run independently (optionally in a thread pool) and their rows are
    merged in the listed seed order, so the output is identical however many
    workers are used.
    """
    strategy = strategy if strategy is not None else cfg.strategy
    get_strategy(strategy)
    seed_list = seeds if seeds is not None else cfg.seeds
    if not seed_list:
        raise ValueError("seed list must be non-empty")

    train, test = build_dataset(cfg, file_loader)
    partitions = build_partitions(cfg, train, file_loader)
    overrides = build_feature_overrides(cfg, train, partitions, file_loader)
    budget = resolve_budget(cfg.budget, train.num_classes)

    def one_seed(seed: int) -> tuple[list[ResultRow], list[str]]:
        settings = _seed_settings(cfg, strategy, budget, seed)
        records = run_experiment(train, test, partitions, settings, overrides)
        rows, flags = [], []
        for rec in records:
            counts = set(rec.labeled_counts)
            if len(counts) != 1:
                raise RuntimeError("clients disagree on labeled count")
            rows.append(ResultRow(
                strategy=strategy,
                seed=seed,
                round=rec.round_index,
                labeled_per_client=counts.pop(),
                accuracy=rec.accuracy,
                balanced_recall=rec.balanced_recall,
            ))
            flags.extend(f"seed{seed}:{flag}" for flag in rec.flags)
        return rows, flags

    if cfg.seed_workers > 1 and len(seed_list) > 1:
        with ThreadPoolExecutor(max_workers=cfg.seed_workers) as ex:
            outcomes = list(ex.map(one_seed, seed_list))
    else:
        outcomes = [one_seed(s) for s in seed_list]

    rows: list[ResultRow] = []
    flags: list[str] = []
    for seed_rows, seed_flags in outcomes:
        rows.extend(seed_rows)
        flags.extend(seed_flags)
    return rows, flags

"""Experiment configuration: a flat INI file with typed, validated sections.

Every run is fully described by one config file; the CLI and service layer
only add overrides (seed list, strategy) on top.  Unknown sections or keys
are rejected so typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .data import UNIFORM, PartitionSpec
from .federation import AGGREGATION_WEIGHTS, WEIGHT_BY_LABELED
from .model import ARCHS, LINEAR, TrainConfig
from .strategies import GLOBAL_SELECTOR, SELECTOR_CHOICES, STRATEGIES, GeometryConfig

BUDGET_TINY = "tiny"
BUDGET_SMALL = "small"


class ConfigError(ValueError):
    """The experiment config is malformed or inconsistent."""


@dataclass
class DatasetSource:
    """Either a train/test CSV pair on disk or synthetic generation knobs."""

    train_path: str | None = None
    test_path: str | None = None
    synth_classes: int | None = None
    synth_dim: int | None = None
    synth_per_class: int | None = None
    synth_spread: float = 0.5
    synth_seed: int = 0

    @property
    def is_synthetic(self) -> bool:
        return self.synth_classes is not None


@dataclass
class ExperimentConfig:
    """Parsed, validated experiment description."""

    source: DatasetSource
    partition: PartitionSpec
    partition_path: str | None
    feature_paths: dict[int, str]
    arch: str
    hidden_units: int
    train: TrainConfig
    geometry: GeometryConfig
    strategy: str
    selector_choice: str
    logo_micro_model: str
    budget: str | int
    rounds: int
    seeds: list[int]
    aggregation_weight: str
    seed_workers: int
    client_workers: int
    output_dir: str


def resolve_budget(budget: str | int, num_classes: int) -> int:
    """tiny -> one annotation per class, small -> three; integers pass through."""
    if budget == BUDGET_TINY:
        return num_classes
    if budget == BUDGET_SMALL:
        return 3 * num_classes
    return int(budget)


_KNOWN_KEYS = {
    "dataset": {"train", "test", "synth_classes", "synth_dim", "synth_per_class",
                "synth_spread", "synth_seed"},
    "features": None,   # client_<id> keys, validated separately
    "partition": {"alpha", "clients", "seed", "file"},
    "model": {"arch", "hidden_units"},
    "train": {"learning_rate", "momentum", "weight_decay", "local_epochs",
              "batch_size"},
    "geometry": {"typicality_k", "kmeans_max_iters", "kmeans_tol"},
    "run": {"strategy", "selector", "logo_micro", "budget", "rounds", "seeds",
            "aggregation_weight", "seed_workers", "client_workers"},
    "output": {"dir"},
}


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}

    def _pop(self, key: str):
        return self.raw.pop(key, None)

    def get_str(self, key: str, default: str | None = None) -> str | None:
        val = self._pop(key)
        return default if val is None else val.strip()

    def get_int(self, key: str, default: int | None = None) -> int | None:
        val = self._pop(key)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be an integer, got {val!r}") from None

    def get_float(self, key: str, default: float | None = None) -> float | None:
        val = self._pop(key)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be a number, got {val!r}") from None

    def reject_leftovers(self) -> None:
        if self.raw:
            key = sorted(self.raw)[0]
            raise ConfigError(f"unknown key {key!r} in section [{self.name}]")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from None

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")

    ds = _Section(parser, "dataset")
    source = DatasetSource(
        train_path=ds.get_str("train"),
        test_path=ds.get_str("test"),
        synth_classes=ds.get_int("synth_classes"),
        synth_dim=ds.get_int("synth_dim"),
        synth_per_class=ds.get_int("synth_per_class"),
        synth_spread=ds.get_float("synth_spread", 0.5),
        synth_seed=ds.get_int("synth_seed", 0),
    )
    ds.reject_leftovers()
    if source.is_synthetic:
        if source.train_path or source.test_path:
            raise ConfigError("[dataset] must give either train/test paths or "
                              "synth_* keys, not both")
        if source.synth_dim is None or source.synth_per_class is None:
            raise ConfigError("[dataset] synthetic mode needs synth_classes, "
                              "synth_dim, and synth_per_class")
    elif not (source.train_path and source.test_path):
        raise ConfigError("[dataset] needs train and test paths, or synth_* keys")

    feats = _Section(parser, "features")
    feature_paths: dict[int, str] = {}
    for key, value in list(feats.raw.items()):
        if not key.startswith("client_"):
            raise ConfigError(f"unknown key {key!r} in section [features]")
        try:
            cid = int(key.removeprefix("client_"))
        except ValueError:
            raise ConfigError(f"bad client id in [features] key {key!r}") from None
        feature_paths[cid] = value.strip()

    part = _Section(parser, "partition")
    alpha_raw = part.get_str("alpha", UNIFORM)
    if alpha_raw == UNIFORM:
        alpha: float | str = UNIFORM
    else:
        try:
            alpha = float(alpha_raw)
        except ValueError:
            raise ConfigError(f"[partition] alpha must be a positive number or "
                              f"'{UNIFORM}', got {alpha_raw!r}") from None
    partition = PartitionSpec(
        alpha=alpha,
        num_clients=part.get_int("clients", 10),
        seed=part.get_int("seed", 0),
    )
    partition_path = part.get_str("file")
    part.reject_leftovers()
    try:
        partition.validate()
    except ValueError as exc:
        raise ConfigError(f"[partition] {exc}") from None

    mdl = _Section(parser, "model")
    arch = mdl.get_str("arch", LINEAR)
    hidden_units = mdl.get_int("hidden_units", 32)
    mdl.reject_leftovers()
    if arch not in ARCHS:
        raise ConfigError(f"[model] arch must be one of {ARCHS}, got {arch!r}")
    if hidden_units < 1:
        raise ConfigError("[model] hidden_units must be >= 1")

    trn = _Section(parser, "train")
    train = TrainConfig(
        learning_rate=trn.get_float("learning_rate", 0.01),
        momentum=trn.get_float("momentum", 0.9),
        weight_decay=trn.get_float("weight_decay", 1e-4),
        local_epochs=trn.get_int("local_epochs", 10),
        batch_size=trn.get_int("batch_size"),
    )
    trn.reject_leftovers()
    try:
        train.validate()
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from None

    geo = _Section(parser, "geometry")
    geometry = GeometryConfig(
        typicality_k=geo.get_int("typicality_k", 20),
        kmeans_max_iters=geo.get_int("kmeans_max_iters", 100),
        kmeans_tol=geo.get_float("kmeans_tol", 1e-6),
    )
    geo.reject_leftovers()
    if geometry.typicality_k < 1:
        raise ConfigError("[geometry] typicality_k must be >= 1")
    if geometry.kmeans_max_iters < 1:
        raise ConfigError("[geometry] kmeans_max_iters must be >= 1")
    if geometry.kmeans_tol < 0:
        raise ConfigError("[geometry] kmeans_tol must be >= 0")

    run = _Section(parser, "run")
    strategy = run.get_str("strategy")
    if strategy is None:
        raise ConfigError("[run] strategy is required")
    if strategy not in STRATEGIES:
        raise ConfigError(f"[run] unknown strategy {strategy!r}; choose from "
                          f"{', '.join(sorted(STRATEGIES))}")
    selector = run.get_str("selector", GLOBAL_SELECTOR)
    logo_micro = run.get_str("logo_micro", GLOBAL_SELECTOR)
    for name, value in (("selector", selector), ("logo_micro", logo_micro)):
        if value not in SELECTOR_CHOICES:
            raise ConfigError(f"[run] {name} must be one of {SELECTOR_CHOICES}")
    budget_raw = run.get_str("budget", BUDGET_TINY)
    if budget_raw in (BUDGET_TINY, BUDGET_SMALL):
        budget: str | int = budget_raw
    else:
        try:
            budget = int(budget_raw)
        except ValueError:
            raise ConfigError(f"[run] budget must be '{BUDGET_TINY}', "
                              f"'{BUDGET_SMALL}', or an integer") from None
        if budget < 1:
            raise ConfigError("[run] budget must be >= 1")
    rounds = run.get_int("rounds", 10)
    if rounds < 1:
        raise ConfigError("[run] rounds must be >= 1")
    seeds = parse_seed_list(run.get_str("seeds", "0,1,2,3"))
    aggregation = run.get_str("aggregation_weight", WEIGHT_BY_LABELED)
    if aggregation not in AGGREGATION_WEIGHTS:
        raise ConfigError(f"[run] aggregation_weight must be one of "
                          f"{AGGREGATION_WEIGHTS}")
    seed_workers = run.get_int("seed_workers", 1)
    client_workers = run.get_int("client_workers", 1)
    run.reject_leftovers()
    if seed_workers < 1 or client_workers < 1:
        raise ConfigError("[run] worker counts must be >= 1")

    out = _Section(parser, "output")
    output_dir = out.get_str("dir", "out")
    out.reject_leftovers()

    return ExperimentConfig(
        source=source,
        partition=partition,
        partition_path=partition_path,
        feature_paths=feature_paths,
        arch=arch,
        hidden_units=hidden_units,
        train=train,
        geometry=geometry,
        strategy=strategy,
        selector_choice=selector,
        logo_micro_model=logo_micro,
        budget=budget,
        rounds=rounds,
        seeds=seeds,
        aggregation_weight=aggregation,
        seed_workers=seed_workers,
        client_workers=client_workers,
        output_dir=output_dir,
    )


def parse_seed_list(raw: str) -> list[int]:
    """Comma-separated seed list; must be non-empty and duplicate-free."""
    try:
        seeds = [int(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad seed list {raw!r}") from None
    if not seeds:
        raise ConfigError("seed list must be non-empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seed list has duplicates")
    return seeds


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))

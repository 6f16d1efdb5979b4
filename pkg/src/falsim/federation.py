"""Client lifecycle, FedAvg aggregation, and federated round orchestration.

One round runs, in order: every client queries its strategy for new points,
annotates them, trains a copy of the global model on its labeled set, and
(when the strategy needs one) refreshes its local-only model; the trained
models are aggregated in client-id order and the global model is evaluated.
All per-client randomness comes from counter-based substreams of the master
seed, so serial and parallel execution are bit-identical.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .data import ClientPartition, FeatureDataset
from .evaluation import accuracy, balanced_recall
from .model import ModelParams, TrainConfig, init_params, sgd_train
from .strategies import (
    GLOBAL_SELECTOR,
    LOCAL_ONLY_SELECTOR,
    GeometryConfig,
    QueryContext,
    get_strategy,
)

WEIGHT_BY_LABELED = "labeled"
WEIGHT_BY_PARTITION = "partition"
AGGREGATION_WEIGHTS = (WEIGHT_BY_LABELED, WEIGHT_BY_PARTITION)

# Strategies that consult a local-only model even under the global selector.
_NEEDS_LOCAL_ONLY = ("kafal", "logo")


@dataclass
class ClientState:
    """One client's annotation bookkeeping and models.

    ``labeled`` and ``unlabeled`` are disjoint sorted dataset row indices
    whose union is exactly ``partition.indices``.
    """

    client_id: int
    partition: ClientPartition
    labeled: np.ndarray
    unlabeled: np.ndarray
    local_params: ModelParams | None = None
    local_only_params: ModelParams | None = None

    @classmethod
    def fresh(cls, partition: ClientPartition) -> "ClientState":
        return cls(
            client_id=partition.client_id,
            partition=partition,
            labeled=np.empty(0, dtype=np.int64),
            unlabeled=partition.indices.copy(),
        )

    def check_bookkeeping(self) -> None:
        if np.intersect1d(self.labeled, self.unlabeled).size:
            raise RuntimeError(f"client {self.client_id}: labeled and unlabeled overlap")
        merged = np.union1d(self.labeled, self.unlabeled)
        if not np.array_equal(merged, self.partition.indices):
            raise RuntimeError(f"client {self.client_id}: labeled/unlabeled do not "
                               "cover the partition")


@dataclass
class RoundRecord:
    """Everything the results sink needs about one completed round."""

    round_index: int              # 1-based, strictly increasing
    labeled_counts: list[int]
    params_digest: str
    accuracy: float
    balanced_recall: float
    flags: list[str] = field(default_factory=list)


def annotate(client: ClientState, selected: np.ndarray,
             budget: int | None = None) -> ClientState:
    """Move ``selected`` rows from the unlabeled to the labeled set.

    ``selected`` must be distinct rows of ``client.unlabeled``; when
    ``budget`` is given the cardinality must match it exactly.
    """
    selected = np.asarray(selected, dtype=np.int64)
    if len(np.unique(selected)) != len(selected):
        raise ValueError("selected indices must be distinct")
    if budget is not None and len(selected) != budget:
        raise ValueError(f"expected {budget} selections, got {len(selected)}")
    if np.setdiff1d(selected, client.unlabeled).size:
        raise ValueError("selected index not in the unlabeled set")
    return replace(
        client,
        labeled=np.union1d(client.labeled, selected),
        unlabeled=np.setdiff1d(client.unlabeled, selected),
    )


def params_digest(params: ModelParams) -> str:
    """Short stable content hash of a parameter set."""
    h = hashlib.sha256()
    h.update(params.arch.encode())
    for arr in params.arrays():
        h.update(str(arr.shape).encode())
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def _check_compatible(a: ModelParams, b: ModelParams) -> None:
    if a.arch != b.arch or a.input_dim != b.input_dim or a.num_classes != b.num_classes:
        raise ValueError("architecture mismatch between aggregation entries")
    for x, y in zip(a.arrays(), b.arrays()):
        if x.shape != y.shape:
            raise ValueError("parameter shape mismatch between aggregation entries")


def fedavg(entries: list[tuple[ModelParams, float]]) -> ModelParams:
    """Entry-wise weighted mean of parameter sets, weights normalized to 1.

    Accumulates in the given (client-id) order as a running weighted mean:
    acc += (w_k / W_k) * (theta_k - acc) with W_k the running weight total.
    This keeps the all-identical fixed point and exact cancellations exact
    while matching the plain weighted mean to floating-point accuracy.
    """
    if not entries:
        raise ValueError("fedavg needs at least one entry")
    head = entries[0][0]
    for params, _ in entries[1:]:
        _check_compatible(head, params)
    acc: ModelParams | None = None
    total = 0.0
    for params, weight in entries:
        if weight < 0:
            raise ValueError("aggregation weights must be non-negative")
        if weight == 0:
            continue
        total += weight
        if acc is None:
            acc = params.clone()
            continue
        step = weight / total
        for dst, src in zip(acc.arrays(), params.arrays()):
            dst += step * (src - dst)
    if acc is None:
        raise ValueError("total aggregation weight must be positive")
    return acc


def train_local_only(client: ClientState, dataset: FeatureDataset, arch: str,
                     cfg: TrainConfig, hidden_units: int = 32,
                     init_seed: int = 0) -> ModelParams:
    """Train a model on this client's labeled rows only, from a fresh seeded
    initialization; aggregated parameters are never consulted."""
    if len(client.labeled) == 0:
        raise ValueError("cannot train a local-only model with no labeled data")
    params = init_params(arch, dataset.dim, dataset.num_classes,
                         hidden_units=hidden_units, seed=init_seed)
    return sgd_train(params, dataset.features[client.labeled],
                     dataset.labels[client.labeled], cfg)


@dataclass
class FalSettings:
    """Static knobs of one federated active learning run."""

    strategy: str
    budget: int
    rounds: int
    arch: str
    master_seed: int
    hidden_units: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)
    selector_choice: str = GLOBAL_SELECTOR
    logo_micro_model: str = GLOBAL_SELECTOR
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    aggregation_weight: str = WEIGHT_BY_LABELED
    client_workers: int = 1

    @property
    def needs_local_only(self) -> bool:
        return (self.strategy in _NEEDS_LOCAL_ONLY
                or self.selector_choice == LOCAL_ONLY_SELECTOR)

    def validate(self) -> "FalSettings":
        get_strategy(self.strategy)
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.aggregation_weight not in AGGREGATION_WEIGHTS:
            raise ValueError(f"aggregation_weight must be one of {AGGREGATION_WEIGHTS}")
        if self.client_workers < 1:
            raise ValueError("client_workers must be >= 1")
        self.train.validate()
        return self


def _local_positions(partition: ClientPartition, rows: np.ndarray) -> np.ndarray:
    return np.searchsorted(partition.indices, rows)


def _query_one(client: ClientState, dataset: FeatureDataset, settings: FalSettings,
               global_params: ModelParams, round_index: int,
               override: np.ndarray | None) -> tuple[np.ndarray, list[str]]:
    """Step 1 for one client: build the QueryContext, run the strategy, and
    map selections back to dataset rows."""
    part = client.partition
    local_only = client.local_only_params
    if settings.needs_local_only and local_only is None:
        # Cold start: no labeled data has existed yet, so the current global
        # parameters stand in for the local-only model.
        local_only = global_params
    ctx = QueryContext(
        features=dataset.features[part.indices],
        labeled=_local_positions(part, client.labeled),
        unlabeled=_local_positions(part, client.unlabeled),
        budget=settings.budget,
        global_params=global_params,
        rng=seeding.substream(settings.master_seed, client.client_id, round_index,
                              seeding.QUERY),
        local_only_params=local_only,
        selector_choice=settings.selector_choice,
        logo_micro_model=settings.logo_micro_model,
        geometry=settings.geometry,
        typicality_features=override,
    )
    picks_local = get_strategy(settings.strategy)(ctx)
    notes = [f"client{client.client_id}:{note}" for note in ctx.notes]
    return part.indices[picks_local], notes


def _train_one(client: ClientState, dataset: FeatureDataset, settings: FalSettings,
               global_params: ModelParams, round_index: int) -> ClientState:
    """Steps 3-4 for one client: local training from the global parameters,
    plus the local-only refresh when the strategy consults one."""
    stream = seeding.substream(settings.master_seed, client.client_id, round_index,
                               seeding.LOCAL_TRAIN)
    cfg = replace(settings.train, seed=int(stream.integers(1 << 63)))
    client.local_params = sgd_train(global_params, dataset.features[client.labeled],
                                    dataset.labels[client.labeled], cfg)
    if settings.needs_local_only:
        lo_stream = seeding.substream(settings.master_seed, client.client_id,
                                      round_index, seeding.LOCAL_ONLY)
        init_seed = int(lo_stream.integers(1 << 63))
        lo_cfg = replace(settings.train, seed=int(lo_stream.integers(1 << 63)))
        client.local_only_params = train_local_only(
            client, dataset, settings.arch, lo_cfg,
            hidden_units=settings.hidden_units, init_seed=init_seed)
    return client


def _map_clients(fn, clients, workers: int):
    if workers <= 1 or len(clients) <= 1:
        return [fn(c) for c in clients]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, clients))


def run_fal_round(dataset: FeatureDataset, test: FeatureDataset,
                  clients: list[ClientState], global_params: ModelParams,
                  settings: FalSettings, round_index: int,
                  feature_overrides: dict[int, np.ndarray] | None = None,
                  ) -> tuple[list[ClientState], ModelParams, RoundRecord]:
    """Run one full federated active learning round.

    Returns the advanced client states, the new global parameters, and a
    RoundRecord with test metrics.  Budget bookkeeping is re-checked after
    annotation: labeled and unlabeled sets stay disjoint and every client's
    labeled count equals round_index * budget.
    """
    overrides = feature_overrides or {}
    for client in clients:
        if len(client.unlabeled) < settings.budget:
            raise RuntimeError(f"client {client.client_id} has "
                               f"{len(client.unlabeled)} unlabeled points; "
                               f"budget is {settings.budget}")

    query = lambda c: _query_one(c, dataset, settings, global_params, round_index,
                                 overrides.get(c.client_id))
    selections = _map_clients(query, clients, settings.client_workers)

    flags: list[str] = []
    annotated = []
    for client, (rows, notes) in zip(clients, selections):
        flags.extend(notes)
        annotated.append(annotate(client, rows, budget=settings.budget))
    for client in annotated:
        client.check_bookkeeping()
        expected = round_index * settings.budget
        if len(client.labeled) != expected:
            raise RuntimeError(f"client {client.client_id} holds "
                               f"{len(client.labeled)} labeled rows after round "
                               f"{round_index}; expected {expected}")

    train = lambda c: _train_one(c, dataset, settings, global_params, round_index)
    trained = _map_clients(train, annotated, settings.client_workers)

    if settings.aggregation_weight == WEIGHT_BY_LABELED:
        weights = [float(len(c.labeled)) for c in trained]
    else:
        weights = [float(len(c.partition.indices)) for c in trained]
    new_global = fedavg([(c.local_params, w) for c, w in zip(trained, weights)])

    record = RoundRecord(
        round_index=round_index,
        labeled_counts=[len(c.labeled) for c in trained],
        params_digest=params_digest(new_global),
        accuracy=accuracy(new_global, test),
        balanced_recall=balanced_recall(new_global, test),
        flags=flags,
    )
    return trained, new_global, record


def run_experiment(dataset: FeatureDataset, test: FeatureDataset,
                   partitions: list[ClientPartition], settings: FalSettings,
                   feature_overrides: dict[int, np.ndarray] | None = None,
                   ) -> list[RoundRecord]:
    """Run ``settings.rounds`` rounds from an empty labeled set."""
    settings.validate()
    smallest = min(len(p.indices) for p in partitions)
    need = settings.budget * settings.rounds
    if need > smallest:
        raise ValueError(f"budget {settings.budget} x {settings.rounds} rounds "
                         f"needs {need} rows per client; smallest partition has "
                         f"{smallest}")
    global_params = init_params(
        settings.arch, dataset.dim, dataset.num_classes,
        hidden_units=settings.hidden_units,
        seed=seeding.substream_seed(settings.master_seed, 0, 0, seeding.GLOBAL_INIT))
    clients = [ClientState.fresh(p) for p in partitions]
    records = []
    for round_index in range(1, settings.rounds + 1):
        clients, global_params, record = run_fal_round(
            dataset, test, clients, global_params, settings, round_index,
            feature_overrides)
        records.append(record)
    return records

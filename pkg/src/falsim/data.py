"""Dataset ingestion, synthetic data generation, and non-IID partitioning.

Datasets are flat CSV tables of feature vectors (layout documented on
``load_dataset``).  Partitioning follows the latent-Dirichlet allocation
recipe: each client draws a class-proportion vector from Dir(alpha * 1) and
fills an equal row quota from the per-class pools; ``alpha="uniform"``
degenerates to exact global class proportions.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import rng_from_seed

UNIFORM = "uniform"

PARTITION_HEADER = ["client_id", "row_index"]


class DataFormatError(ValueError):
    """A dataset or partition file violates the documented CSV layout."""


@dataclass
class FeatureDataset:
    """Feature-vector table: the universe all clients draw from."""

    ids: np.ndarray        # (n,) unique non-negative ints
    features: np.ndarray   # (n, dim) float64
    labels: np.ndarray     # (n,) ints in [0, num_classes)
    num_classes: int

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def validate(self) -> "FeatureDataset":
        if self.features.ndim != 2:
            raise DataFormatError("features must be a 2-d matrix")
        n = len(self.ids)
        if not (len(self.labels) == n == self.features.shape[0]):
            raise DataFormatError("ids, labels and feature rows must align")
        if n == 0:
            raise DataFormatError("dataset is empty")
        if self.num_classes < 1:
            raise DataFormatError("num_classes must be positive")
        if len(np.unique(self.ids)) != n:
            raise DataFormatError("duplicate id")
        if np.any(self.ids < 0):
            raise DataFormatError("ids must be non-negative")
        if np.any(self.labels < 0) or np.any(self.labels >= self.num_classes):
            raise DataFormatError("label out of range")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("non-finite feature value")
        return self


@dataclass
class PartitionSpec:
    """How one dataset is split across clients."""

    alpha: float | str      # positive concentration, or "uniform" for alpha=inf
    num_clients: int
    seed: int

    def validate(self) -> "PartitionSpec":
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.alpha != UNIFORM:
            if not isinstance(self.alpha, (int, float)) or not float(self.alpha) > 0:
                raise ValueError("alpha must be a positive number or 'uniform'")
        return self


@dataclass
class ClientPartition:
    """The dataset rows assigned to one client."""

    client_id: int
    indices: np.ndarray    # sorted, unique row indices


def dataset_from_csv(text: str) -> FeatureDataset:
    """Parse the dataset CSV layout.

    Header: ``id,label,f0,...,f{d-1}[,#classes=C]``; one sample per row.
    When the ``#classes`` token is absent the class count is inferred as
    ``max(label) + 1``.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [tok.strip() for tok in next(reader)]
    except StopIteration:
        raise DataFormatError("empty dataset file") from None
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise DataFormatError("header must start with 'id,label' and at least one feature column")
    declared_classes = None
    feature_cols = header[2:]
    if feature_cols and feature_cols[-1].startswith("#classes="):
        tok = feature_cols.pop()
        try:
            declared_classes = int(tok.split("=", 1)[1])
        except ValueError:
            raise DataFormatError(f"invalid class count token {tok!r}") from None
        if declared_classes < 1:
            raise DataFormatError("declared class count must be positive")
    dim = len(feature_cols)
    if dim < 1:
        raise DataFormatError("dataset must have at least one feature column")

    ids, labels, rows = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise DataFormatError(f"line {lineno}: expected {dim + 2} cells, got {len(row)}")
        try:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            rows.append([float(tok) for tok in row[2:]])
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric cell") from None
    if not ids:
        raise DataFormatError("dataset has no rows")

    labels_arr = np.asarray(labels, dtype=np.int64)
    num_classes = declared_classes if declared_classes is not None else int(labels_arr.max()) + 1
    ds = FeatureDataset(
        ids=np.asarray(ids, dtype=np.int64),
        features=np.asarray(rows, dtype=np.float64),
        labels=labels_arr,
        num_classes=num_classes,
    )
    return ds.validate()


def dataset_to_csv(dataset: FeatureDataset) -> str:
    """Serialize a dataset to the documented CSV layout (LF endings).

    Floats are written with shortest round-trip repr, so load(save(ds))
    reproduces the feature matrix bit-for-bit.
    """
    header = ["id", "label"] + [f"f{j}" for j in range(dataset.dim)]
    header.append(f"#classes={dataset.num_classes}")
    lines = [",".join(header)]
    for i in range(dataset.n):
        cells = [str(int(dataset.ids[i])), str(int(dataset.labels[i]))]
        cells.extend(repr(float(v)) for v in dataset.features[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def load_dataset(path: str | Path) -> FeatureDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return dataset_from_csv(path.read_text(encoding="utf-8"))


def save_dataset(dataset: FeatureDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_to_csv(dataset))


def synth_dataset(num_classes: int, dim: int, per_class: int, spread: float,
                  seed: int) -> tuple[FeatureDataset, FeatureDataset]:
    """Gaussian-mixture train/test pair, fully determined by the seed.

    Each class mean is drawn once from a unit-scale normal; samples are drawn
    with standard deviation ``spread`` around it.  The first 80% of each
    class's samples form the train split, the rest the test split.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if per_class < 2:
        raise ValueError("per_class must be >= 2 to split train/test")
    if spread < 0:
        raise ValueError("spread must be >= 0")

    rng = rng_from_seed(seed)
    means = rng.normal(0.0, 1.0, size=(num_classes, dim))
    n_train = (4 * per_class) // 5

    tr_ids, tr_feats, tr_labels = [], [], []
    te_ids, te_feats, te_labels = [], [], []
    for c in range(num_classes):
        samples = means[c] + spread * rng.standard_normal((per_class, dim))
        for j in range(per_class):
            row_id = c * per_class + j
            if j < n_train:
                tr_ids.append(row_id)
                tr_feats.append(samples[j])
                tr_labels.append(c)
            else:
                te_ids.append(row_id)
                te_feats.append(samples[j])
                te_labels.append(c)

    train = FeatureDataset(
        ids=np.asarray(tr_ids, dtype=np.int64),
        features=np.asarray(tr_feats, dtype=np.float64),
        labels=np.asarray(tr_labels, dtype=np.int64),
        num_classes=num_classes,
    ).validate()
    test = FeatureDataset(
        ids=np.asarray(te_ids, dtype=np.int64),
        features=np.asarray(te_feats, dtype=np.float64),
        labels=np.asarray(te_labels, dtype=np.int64),
        num_classes=num_classes,
    ).validate()
    return train, test


def _largest_remainder(raw: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative reals summing to ``total`` into integers with the
    same sum; ties broken by lower index."""
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    remainders = raw - base
    order = np.lexsort((np.arange(len(raw)), -remainders))
    out = base.copy()
    if short > 0:
        out[order[:short]] += 1
    return out


def dirichlet_partition(dataset: FeatureDataset, spec: PartitionSpec) -> list[ClientPartition]:
    """Split every dataset row across ``spec.num_clients`` clients.

    Each client gets a quota of ``floor(n / K)`` rows (+1 for the first
    ``n mod K`` clients).  A class-proportion vector is drawn per client from
    Dir(alpha * 1) and quotas are filled by sampling classes from the
    remaining per-class pools, renormalizing over non-exhausted classes when
    a pool empties.  ``alpha="uniform"`` uses exact global proportions with
    largest-remainder rounding instead of sampling proportions.
    """
    spec.validate()
    n, num_clients = dataset.n, spec.num_clients
    if num_clients > n:
        raise ValueError(f"cannot split {n} rows across {num_clients} clients")

    rng = rng_from_seed(spec.seed)
    num_classes = dataset.num_classes
    base, extra = divmod(n, num_clients)
    quotas = [base + 1 if k < extra else base for k in range(num_clients)]

    # Per-class pools in a seeded order; cursors advance as rows are taken.
    pools = [rng.permutation(np.flatnonzero(dataset.labels == c)) for c in range(num_classes)]
    cursors = np.zeros(num_classes, dtype=np.int64)
    remaining = np.array([len(p) for p in pools], dtype=np.int64)

    if spec.alpha == UNIFORM:
        proportions = None
    else:
        proportions = rng.dirichlet(np.full(num_classes, float(spec.alpha)), size=num_clients)

    global_props = remaining / n
    partitions = []
    for k in range(num_clients):
        quota = quotas[k]
        if proportions is None:
            desired = _largest_remainder(quota * global_props, quota)
            take = np.minimum(desired, remaining)
            deficit = quota - int(take.sum())
            while deficit > 0:
                c = int(np.argmax(remaining - take))
                take[c] += 1
                deficit -= 1
            counts = take
        else:
            counts = np.zeros(num_classes, dtype=np.int64)
            probs = proportions[k]
            left = remaining.copy()
            for _ in range(quota):
                weights = probs * (left > 0)
                total = weights.sum()
                if total <= 0:
                    weights = (left > 0).astype(np.float64)
                    total = weights.sum()
                u = rng.random() * total
                c = int(np.searchsorted(np.cumsum(weights), u, side="right"))
                c = min(c, num_classes - 1)
                while left[c] == 0:
                    c = (c + 1) % num_classes
                counts[c] += 1
                left[c] -= 1

        chunks = []
        for c in range(num_classes):
            if counts[c] == 0:
                continue
            start = cursors[c]
            chunks.append(pools[c][start:start + counts[c]])
            cursors[c] += counts[c]
            remaining[c] -= counts[c]
        indices = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
        partitions.append(ClientPartition(client_id=k, indices=indices))
    return partitions


def partitions_to_csv(partitions: list[ClientPartition]) -> str:
    lines = [",".join(PARTITION_HEADER)]
    for part in partitions:
        for idx in part.indices:
            lines.append(f"{part.client_id},{int(idx)}")
    return "\n".join(lines) + "\n"


def partitions_from_csv(text: str) -> list[ClientPartition]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [tok.strip() for tok in next(reader)]
    except StopIteration:
        raise DataFormatError("empty partition file") from None
    if header != PARTITION_HEADER:
        raise DataFormatError(f"partition header must be {','.join(PARTITION_HEADER)}")
    by_client: dict[int, list[int]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataFormatError(f"line {lineno}: expected 2 cells")
        try:
            cid, idx = int(row[0]), int(row[1])
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric cell") from None
        by_client.setdefault(cid, []).append(idx)
    if not by_client:
        raise DataFormatError("partition file has no rows")
    client_ids = sorted(by_client)
    if client_ids != list(range(len(client_ids))):
        raise DataFormatError("client ids must be contiguous from 0")
    return [
        ClientPartition(client_id=cid, indices=np.sort(np.asarray(by_client[cid], dtype=np.int64)))
        for cid in client_ids
    ]


def load_partitions(path: str | Path) -> list[ClientPartition]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"partition file not found: {path}")
    return partitions_from_csv(path.read_text(encoding="utf-8"))


def save_partitions(partitions: list[ClientPartition], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(partitions_to_csv(partitions))


def partition_class_counts(dataset: FeatureDataset, partitions: list[ClientPartition]) -> np.ndarray:
    """Per-client class-count matrix, shape (num_clients, num_classes)."""
    counts = np.zeros((len(partitions), dataset.num_classes), dtype=np.int64)
    for i, part in enumerate(partitions):
        counts[i] = np.bincount(dataset.labels[part.indices], minlength=dataset.num_classes)
    return counts


def format_class_table(counts: np.ndarray) -> str:
    """Plain-text per-client class-count table (the textual partition view)."""
    num_clients, num_classes = counts.shape
    head = ["client"] + [f"c{c}" for c in range(num_classes)] + ["total"]
    rows = [head]
    for k in range(num_clients):
        rows.append([str(k)] + [str(int(v)) for v in counts[k]] + [str(int(counts[k].sum()))])
    widths = [max(len(r[j]) for r in rows) for j in range(len(head))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows)

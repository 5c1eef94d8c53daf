"""Per-client heterogeneous shards for tabular data.

Pipeline: :func:`load_csv` -> :func:`normalize` -> :func:`make_plan`
(Dirichlet or i.i.d. row partition plus feature slicing) -> :func:`make_shards`.
Labels keep the full global class range on every client even when a class is
locally absent.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from hetfl._seeding import derive_rng
from hetfl.errors import DataError, InvalidArgumentError, PartitionError

MISSING = {"", "?", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class Table:
    feature_names: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    num_classes: int
    numeric: np.ndarray | None = None  # bool mask; True for standardizable columns
    class_names: tuple[str, ...] = ()
    groups: np.ndarray | None = None  # optional cluster id per row (synthetic data)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[0] != labels.shape[0]:
            raise DataError(f"rows {rows.shape} and labels {labels.shape} disagree")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError("label outside [0, num_classes)")
        numeric = (np.ones(rows.shape[1], dtype=bool) if self.numeric is None
                   else np.asarray(self.numeric, dtype=bool))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "numeric", numeric)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING


def _label_key(value: str):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def load_csv(path, label_column: str, schema: dict[str, str] | None = None) -> Table:
    """Read a headed CSV into a :class:`Table`.

    ``schema`` maps column name to ``"numeric"`` or ``"categorical"``; columns
    not listed are dropped.  Without a schema every non-label column is kept
    and typed numeric when all its non-missing cells parse as floats.
    Numeric gaps get the column median; categorical gaps become their own level.
    Trailing periods on labels are dropped (ADULT's test file writes ``>50K.``).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        records = [[c.strip() for c in r] for r in reader if any(c.strip() for c in r)]
    if not records:
        raise DataError(f"{path}: no data rows")
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header")
    for i, r in enumerate(records):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(r)} cells, header has {len(header)}")

    col = {name: j for j, name in enumerate(header)}
    if schema is None:
        schema = {}
        for name in header:
            if name == label_column:
                continue
            cells = [r[col[name]] for r in records if not _is_missing(r[col[name]])]
            try:
                [float(c) for c in cells]
                schema[name] = "numeric"
            except ValueError:
                schema[name] = "categorical"
    for name, kind in schema.items():
        if name not in col:
            raise DataError(f"{path}: schema column {name!r} not in header")
        if kind not in ("numeric", "categorical"):
            raise DataError(f"{path}: column {name!r} has unknown kind {kind!r}")

    raw_labels = [r[col[label_column]].rstrip(".") for r in records]
    for i, v in enumerate(raw_labels):
        if _is_missing(v):
            raise DataError(f"{path}: row {i + 2}: missing label")
    class_names = tuple(sorted(set(raw_labels), key=_label_key))
    label_of = {v: i for i, v in enumerate(class_names)}
    labels = np.array([label_of[v] for v in raw_labels], dtype=np.int64)

    columns, names, numeric = [], [], []
    for name in header:
        if name == label_column or name not in schema:
            continue
        j = col[name]
        if schema[name] == "numeric":
            values = np.empty(len(records))
            for i, r in enumerate(records):
                cell = r[j]
                if _is_missing(cell):
                    values[i] = np.nan
                    continue
                try:
                    values[i] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {i + 2}, column {name!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(values[i]):
                    raise DataError(f"{path}: row {i + 2}, column {name!r}: non-finite value")
            gaps = np.isnan(values)
            if gaps.all():
                raise DataError(f"{path}: column {name!r} has no values")
            values[gaps] = np.median(values[~gaps])
            columns.append(values)
            names.append(name)
            numeric.append(True)
        else:
            cells = ["<missing>" if _is_missing(r[j]) else r[j] for r in records]
            for level in sorted(set(cells)):
                columns.append(np.array([c == level for c in cells], dtype=np.float64))
                names.append(f"{name}={level}")
                numeric.append(False)
    if not columns:
        raise DataError(f"{path}: no feature columns")
    return Table(tuple(names), np.column_stack(columns), labels, len(class_names),
                 np.array(numeric), class_names)


def normalize(table: Table) -> Table:
    """Standardize numeric columns to mean 0, population sd 1; constant columns become 0."""
    if table.n_rows < 2:
        raise InvalidArgumentError("normalize needs at least 2 rows")
    rows = table.rows.copy()
    cols = np.flatnonzero(table.numeric)
    sub = rows[:, cols]
    mean = sub.mean(axis=0)
    sd = sub.std(axis=0)
    varying = sd > 1e-12 * np.maximum(1.0, np.abs(mean))  # float rounding on constant columns
    safe = np.where(varying, sd, 1.0)
    rows[:, cols] = np.where(varying, (sub - mean) / safe, 0.0)
    return replace(table, rows=rows)


@dataclass(frozen=True)
class PartitionPlan:
    rows: tuple[np.ndarray, ...]
    features: tuple[np.ndarray, ...]
    dirichlet_alpha: float | None  # None for the i.i.d. split
    seed: int

    @property
    def k(self) -> int:
        return len(self.rows)


def _assign_by_proportions(labels: np.ndarray, classes: np.ndarray, props: np.ndarray,
                           rng: np.random.Generator, k: int) -> list[list[int]]:
    parts: list[list[int]] = [[] for _ in range(k)]
    for ci, c in enumerate(classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        cuts = (np.cumsum(props[ci]) * idx.size).astype(int)[:-1]
        for client, chunk in enumerate(np.split(idx, cuts)):
            parts[client].extend(chunk.tolist())
    return parts


def partition_dirichlet(labels, k: int, alpha: float, seed: int, min_per_client: int = 8,
                        max_retries: int = 1000) -> list[np.ndarray]:
    """Label-skewed split: per class, client shares ~ Dirichlet(alpha, ..., alpha).

    Attempt ``a`` draws the full (classes x k) proportion matrix from
    ``derive_rng(seed, "dirichlet", a)`` (classes in ascending order), then
    shuffles rows with a separate stream.  Attempts repeat until every client
    has ``min_per_client`` rows and two distinct classes; if the class
    condition never holds, the first attempt meeting the size bound is used.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if k < 2:
        raise InvalidArgumentError(f"need k >= 2 clients, got {k}")
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be > 0, got {alpha}")
    if labels.size < k * min_per_client:
        raise PartitionError(
            f"{labels.size} rows cannot give {k} clients {min_per_client} rows each"
        )
    classes = np.unique(labels)
    want_two = classes.size >= 2
    fallback = None
    for attempt in range(max_retries):
        props = derive_rng(seed, "dirichlet", attempt).dirichlet(
            np.full(k, float(alpha)), size=classes.size)
        parts = _assign_by_proportions(labels, classes, props,
                                       derive_rng(seed, "dirichlet_shuffle", attempt), k)
        if min(len(p) for p in parts) < min_per_client:
            continue
        if not want_two or all(np.unique(labels[p]).size >= 2 for p in parts):
            return [np.sort(np.array(p, dtype=np.int64)) for p in parts]
        if fallback is None:
            fallback = parts
    if fallback is not None:
        return [np.sort(np.array(p, dtype=np.int64)) for p in fallback]
    raise PartitionError(
        f"no Dirichlet(alpha={alpha}) split gave every client {min_per_client} rows "
        f"after {max_retries} attempts"
    )


def partition_iid(labels, k: int, seed: int) -> list[np.ndarray]:
    """Stratified uniform split: each class dealt round-robin in shuffled order."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if k < 2:
        raise InvalidArgumentError(f"need k >= 2 clients, got {k}")
    if labels.size < k:
        raise PartitionError(f"{labels.size} rows for {k} clients")
    rng = derive_rng(seed, "iid")
    parts: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        for pos, row in enumerate(idx):
            parts[(offset + pos) % k].append(int(row))
        offset += idx.size
    return [np.sort(np.array(p, dtype=np.int64)) for p in parts]


def split_feature_space(d: int, k: int, overlap_fraction: float, seed: int) -> list[np.ndarray]:
    """Shared pool of ``ceil(overlap * d)`` columns for all, the rest dealt round-robin."""
    if not 0.0 <= overlap_fraction <= 1.0:
        raise InvalidArgumentError(f"overlap_fraction must be in [0, 1], got {overlap_fraction}")
    if d < 1 or k < 1:
        raise InvalidArgumentError(f"need d >= 1 and k >= 1, got d={d}, k={k}")
    n_shared = math.ceil(overlap_fraction * d)
    if n_shared == 0 and d < k:
        raise InvalidArgumentError(f"{d} features cannot give {k} clients one private feature each")
    order = derive_rng(seed, "features").permutation(d)
    shared, rest = order[:n_shared], order[n_shared:]
    return [np.sort(np.concatenate([shared, rest[i::k]])).astype(np.int64) for i in range(k)]


def holdout_groups(parts: Sequence[np.ndarray], groups: np.ndarray) -> list[np.ndarray]:
    """Move all of group ``g_i`` (i-th distinct group) out of client ``i`` into client ``i + 1``.

    Keeps the partition exhaustive while leaving client ``i`` without one cluster.
    """
    uniq = np.unique(groups)
    k = len(parts)
    parts = [np.asarray(p, dtype=np.int64) for p in parts]
    for i in range(k):
        g = uniq[i % uniq.size]
        moving = parts[i][groups[parts[i]] == g]
        parts[i] = parts[i][groups[parts[i]] != g]
        nxt = (i + 1) % k
        parts[nxt] = np.concatenate([parts[nxt], moving])
    return [np.sort(p) for p in parts]


def make_plan(table: Table, k: int, seed: int, alpha: float | None = 0.5,
              overlap_fraction: float = 0.5, min_per_client: int = 8,
              hold_out_groups: bool = False) -> PartitionPlan:
    """Row partition (Dirichlet, or i.i.d. when ``alpha is None``) plus feature slices."""
    if alpha is None:
        rows = partition_iid(table.labels, k, seed)
    else:
        rows = partition_dirichlet(table.labels, k, alpha, seed, min_per_client)
    if hold_out_groups:
        if table.groups is None:
            raise InvalidArgumentError("hold_out_groups needs a table with group ids")
        rows = holdout_groups(rows, table.groups)
    features = split_feature_space(table.n_features, k, overlap_fraction, seed)
    return PartitionPlan(tuple(rows), tuple(features), alpha, seed)


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    feature_indices: np.ndarray
    train_x: np.ndarray
    train_y: np.ndarray
    valid_x: np.ndarray
    valid_y: np.ndarray
    num_classes: int
    train_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    valid_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.train_y, self.valid_y]),
                           minlength=self.num_classes)


def make_shards(table: Table, plan: PartitionPlan, valid_fraction: float = 0.25,
                seed: int = 0) -> list[ClientShard]:
    """Cut each client's rows/columns and split them, stratified, into train and valid.

    Every locally present class keeps at least one training row; a class with
    two or more local rows always contributes at least one validation row.
    """
    if not 0.0 < valid_fraction < 1.0:
        raise InvalidArgumentError(f"valid_fraction must be in (0, 1), got {valid_fraction}")
    shards = []
    for cid, (rows, feats) in enumerate(zip(plan.rows, plan.features)):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size < 2:
            raise PartitionError(f"client {cid} has {rows.size} rows; need at least 2")
        rng = derive_rng(seed, "valid_split", cid)
        y = table.labels[rows]
        train, valid = [], []
        for c in np.unique(y):
            local = rng.permutation(rows[y == c])
            n_valid = 0
            if local.size >= 2:
                half_up = int(math.floor(local.size * valid_fraction + 0.5))
                n_valid = min(local.size - 1, max(1, half_up))
            valid.extend(local[:n_valid].tolist())
            train.extend(local[n_valid:].tolist())
        if not valid:
            raise PartitionError(f"client {cid} has no class with 2 rows; cannot validate")
        train_rows = np.sort(np.array(train, dtype=np.int64))
        valid_rows = np.sort(np.array(valid, dtype=np.int64))
        feats = np.asarray(feats, dtype=np.int64)
        shards.append(ClientShard(
            cid, feats,
            table.rows[np.ix_(train_rows, feats)], table.labels[train_rows],
            table.rows[np.ix_(valid_rows, feats)], table.labels[valid_rows],
            table.num_classes, train_rows, valid_rows,
        ))
    return shards


def shard_manifest(plan: PartitionPlan, shards: Sequence[ClientShard]) -> dict:
    return {
        "seed": plan.seed,
        "dirichlet_alpha": plan.dirichlet_alpha,
        "clients": [
            {
                "client_id": s.client_id,
                "feature_indices": s.feature_indices.tolist(),
                "train_rows": s.train_rows.tolist(),
                "valid_rows": s.valid_rows.tolist(),
                "class_histogram": s.class_histogram().tolist(),
            }
            for s in shards
        ],
    }


def write_manifest(plan: PartitionPlan, shards: Sequence[ClientShard], path) -> None:
    Path(path).write_text(json.dumps(shard_manifest(plan, shards), indent=2))


def total_variation(counts, reference) -> float:
    """TV distance between two (unnormalized) histograms."""
    p = np.asarray(counts, dtype=np.float64)
    q = np.asarray(reference, dtype=np.float64)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())

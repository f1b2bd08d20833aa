"""Multi-task datasets with a binary sensitive attribute.

Loading from CSV, pooled standardization, sensitive one-hot encoding,
stratified splits, k-fold indices, and a synthetic environment generator
whose inputs live on the unit sphere.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import (
    DoubleEncoding,
    EmptyTask,
    GroupDepleted,
    GroupMissing,
    InvalidSpec,
    MissingColumn,
    MissingValue,
    NonBinarySensitive,
    TooFewRows,
)

log = logging.getLogger(__name__)

COLUMN_KINDS = ("numeric", "categorical", "sensitive", "output")
SENSITIVE_NAMES = ("sensitive=1", "sensitive=2")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """One task: ``features`` (m, d), ``outputs`` (m,), ``sensitive`` (m,) in {1, 2}.

    ``row_ids`` are the row positions in the source file (or generator) and
    survive subsetting, so callers can audit which rows an algorithm saw.
    """

    task_id: str
    features: np.ndarray
    outputs: np.ndarray
    sensitive: np.ndarray
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        X = _frozen(self.features)
        y = _frozen(self.outputs)
        s = _frozen(self.sensitive, dtype=np.int64)
        if X.ndim != 2:
            raise InvalidSpec(f"task {self.task_id}: features must be 2-D")
        m = X.shape[0]
        if y.shape != (m,) or s.shape != (m,):
            raise InvalidSpec(f"task {self.task_id}: features, outputs, sensitive disagree in length")
        if m < 1:
            raise EmptyTask(f"task {self.task_id} has no rows")
        if not np.isin(s, (1, 2)).all():
            raise NonBinarySensitive(f"task {self.task_id}: sensitive labels must be 1 or 2")
        ids = np.arange(m) if self.row_ids is None else self.row_ids
        ids = _frozen(ids, dtype=np.int64)
        if ids.shape != (m,):
            raise InvalidSpec(f"task {self.task_id}: row_ids length mismatch")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "sensitive", s)
        object.__setattr__(self, "row_ids", ids)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def group_counts(self) -> tuple[int, int]:
        n1 = int(np.count_nonzero(self.sensitive == 1))
        return n1, self.m - n1

    def require_both_groups(self) -> None:
        n1, n2 = self.group_counts()
        if n1 == 0 or n2 == 0:
            raise GroupMissing(f"task {self.task_id} has only one sensitive group")

    def subset(self, idx) -> "TaskDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return TaskDataset(
            self.task_id, self.features[idx], self.outputs[idx], self.sensitive[idx], self.row_ids[idx]
        )

    def with_features(self, features) -> "TaskDataset":
        return replace(self, features=features)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str


@dataclass(frozen=True)
class Schema:
    """Column kinds plus the task column and which sensitive value is group 1."""

    columns: tuple[ColumnSpec, ...]
    task_column: str | None = None
    sensitive_positive: str | None = None

    def __post_init__(self):
        kinds = [c.kind for c in self.columns]
        for k in kinds:
            if k not in COLUMN_KINDS:
                raise InvalidSpec(f"unknown column kind {k!r}")
        if kinds.count("sensitive") != 1 or kinds.count("output") != 1:
            raise InvalidSpec("schema needs exactly one sensitive and one output column")

    def of_kind(self, kind: str) -> list[str]:
        return [c.name for c in self.columns if c.kind == kind]

    @classmethod
    def from_dict(cls, cfg: dict) -> "Schema":
        cols = tuple(ColumnSpec(str(k), str(v)) for k, v in cfg["columns"].items())
        pos = cfg.get("sensitive_positive")
        return cls(cols, cfg.get("task_column"), None if pos is None else str(pos))

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        return {
            "task_column": self.task_column,
            "sensitive_positive": self.sensitive_positive,
            "columns": {c.name: c.kind for c in self.columns},
        }


@dataclass(frozen=True, eq=False)
class TaskCollection:
    tasks: tuple[TaskDataset, ...]
    feature_names: tuple[str, ...]
    schema: Schema | None = None
    output_levels: tuple[float, ...] = (-1.0, 1.0)
    output_range: tuple[float, float] = (-1.0, 1.0)
    sensitive_encoded: bool = False
    name: str = "collection"

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.tasks:
            raise EmptyTask("collection has no tasks")
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise InvalidSpec("task ids must be unique")
        d = len(self.feature_names)
        for t in self.tasks:
            if t.d != d:
                raise InvalidSpec(f"task {t.task_id} has {t.d} features, expected {d}")

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def T(self) -> int:
        return len(self.tasks)

    @property
    def task_ids(self) -> list[str]:
        return [t.task_id for t in self.tasks]

    def task(self, task_id: str) -> TaskDataset:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    def with_tasks(self, tasks) -> "TaskCollection":
        return replace(self, tasks=tuple(tasks))

    def without(self, task_id: str) -> "TaskCollection":
        return self.with_tasks(t for t in self.tasks if t.task_id != task_id)


# ---------------------------------------------------------------------------
# CSV ingest

def load_csv(path, schema: Schema, task_column: str | None = None) -> TaskCollection:
    """Read a CSV with header into one :class:`TaskDataset` per task key.

    Categorical columns are one-hot expanded in place (levels sorted), the
    sensitive column is mapped to {1, 2}, and row order is kept within each
    task.  Tasks containing a single sensitive group are dropped with a
    warning because their group-mean gap is undefined.
    """
    task_column = task_column or schema.task_column
    if task_column is None:
        raise InvalidSpec("no task column given")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    needed = [c.name for c in schema.columns] + [task_column]
    for name in needed:
        if name not in header:
            raise MissingColumn(f"column {name!r} not in {path}")
    if not rows:
        raise EmptyTask(f"{path} has no data rows")
    for i, row in enumerate(rows):
        for name in needed:
            if row[name] is None or row[name].strip() == "":
                raise MissingValue(f"row {i + 2}, column {name!r} is empty")

    sens_col = schema.of_kind("sensitive")[0]
    out_col = schema.of_kind("output")[0]
    sens_values = sorted({r[sens_col].strip() for r in rows})
    if len(sens_values) != 2:
        raise NonBinarySensitive(f"sensitive column {sens_col!r} has {len(sens_values)} distinct values")
    positive = schema.sensitive_positive if schema.sensitive_positive is not None else sens_values[0]
    if positive not in sens_values:
        raise NonBinarySensitive(f"positive label {positive!r} not among {sens_values}")

    names: list[str] = []
    blocks: list[np.ndarray] = []
    for col in schema.columns:
        values = [r[col.name].strip() for r in rows]
        if col.kind == "numeric":
            names.append(col.name)
            blocks.append(_to_float(values, col.name)[:, None])
        elif col.kind == "categorical":
            levels = sorted(set(values))
            onehot = np.zeros((len(rows), len(levels)))
            index = {lv: j for j, lv in enumerate(levels)}
            for i, v in enumerate(values):
                onehot[i, index[v]] = 1.0
            names.extend(f"{col.name}={lv}" for lv in levels)
            blocks.append(onehot)
    X = np.hstack(blocks) if blocks else np.zeros((len(rows), 0))
    y = _to_float([r[out_col].strip() for r in rows], out_col)
    s = np.array([1 if r[sens_col].strip() == positive else 2 for r in rows])
    keys = [r[task_column].strip() for r in rows]

    order: dict[str, list[int]] = {}
    for i, k in enumerate(keys):
        order.setdefault(k, []).append(i)
    tasks = []
    for k, idx in order.items():
        idx = np.array(idx)
        t = TaskDataset(k, X[idx], y[idx], s[idx], idx)
        n1, n2 = t.group_counts()
        if n1 == 0 or n2 == 0:
            log.warning("dropping task %s: only one sensitive group present", k)
            continue
        tasks.append(t)
    if not tasks:
        raise EmptyTask("no task contains both sensitive groups")
    levels = tuple(float(v) for v in np.unique(y))
    return TaskCollection(
        tuple(tasks),
        tuple(names),
        schema=schema,
        output_levels=levels,
        output_range=(float(y.min()), float(y.max())),
        name=Path(path).stem,
    )


def _to_float(values: Sequence[str], name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in values])
    except ValueError as exc:
        raise InvalidSpec(f"column {name!r} is not numeric: {exc}") from None


# ---------------------------------------------------------------------------
# standardization

@dataclass(frozen=True)
class StandardizationParams:
    """Per-column affine maps ``(x - mean) / scale`` with population variance."""

    names: tuple[str, ...]
    means: tuple[float, ...]
    scales: tuple[float, ...]
    dropped: tuple[str, ...] = ()
    passthrough: tuple[str, ...] = ()
    output_mean: float | None = None
    output_scale: float | None = None

    def apply(self, collection: TaskCollection) -> TaskCollection:
        src = {n: j for j, n in enumerate(collection.feature_names)}
        missing = [n for n in self.names + self.passthrough if n not in src]
        if missing:
            raise MissingColumn(f"columns {missing} not in collection")
        cols = [src[n] for n in self.names]
        keep = [src[n] for n in self.passthrough]
        mu, sc = np.array(self.means), np.array(self.scales)
        tasks = []
        for t in collection.tasks:
            X = np.hstack([(t.features[:, cols] - mu) / sc, t.features[:, keep]])
            y = t.outputs if self.output_mean is None else (t.outputs - self.output_mean) / self.output_scale
            tasks.append(TaskDataset(t.task_id, X, y, t.sensitive, t.row_ids))
        levels, rng = collection.output_levels, collection.output_range
        if self.output_mean is not None:
            levels = tuple(float(v) for v in np.unique(self._out(np.array(levels))))
            rng = tuple(float(v) for v in self._out(np.array(rng)))
        return replace(
            collection,
            tasks=tuple(tasks),
            feature_names=self.names + self.passthrough,
            output_levels=levels,
            output_range=rng,
        )

    def _out(self, y):
        return (y - self.output_mean) / self.output_scale

    def invert_features(self, X: np.ndarray) -> np.ndarray:
        k = len(self.names)
        X = np.asarray(X, dtype=float)
        return np.hstack([X[:, :k] * np.array(self.scales) + np.array(self.means), X[:, k:]])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("# standardization: x_std = (x - mean) / scale; scale = sqrt(population variance)\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["column", "role", "mean", "scale"])
            for n, mu, sc in zip(self.names, self.means, self.scales):
                w.writerow([n, "feature", repr(mu), repr(sc)])
            for n in self.passthrough:
                w.writerow([n, "passthrough", "", ""])
            for n in self.dropped:
                w.writerow([n, "dropped", "", ""])
            if self.output_mean is not None:
                w.writerow(["<output>", "output", repr(self.output_mean), repr(self.output_scale)])

    @classmethod
    def load(cls, path) -> "StandardizationParams":
        names, means, scales, dropped, passthrough = [], [], [], [], []
        om = osc = None
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        for row in csv.DictReader(lines):
            role = row["role"]
            if role == "feature":
                names.append(row["column"])
                means.append(float(row["mean"]))
                scales.append(float(row["scale"]))
            elif role == "passthrough":
                passthrough.append(row["column"])
            elif role == "dropped":
                dropped.append(row["column"])
            elif role == "output":
                om, osc = float(row["mean"]), float(row["scale"])
        return cls(tuple(names), tuple(means), tuple(scales), tuple(dropped), tuple(passthrough), om, osc)


def standardize(
    collection: TaskCollection, outputs: bool | None = None, const_tol: float = 1e-12
) -> tuple[TaskCollection, StandardizationParams]:
    """Fit pooled (all tasks, all rows) statistics and apply them to every task.

    Sensitive one-hot columns pass through untouched.  Constant columns are
    dropped with a warning.  ``outputs=None`` standardizes the outputs only
    when they take more than two distinct values.
    """
    X = np.vstack([t.features for t in collection.tasks])
    y = np.concatenate([t.outputs for t in collection.tasks])
    names, means, scales, dropped, passthrough = [], [], [], [], []
    for j, n in enumerate(collection.feature_names):
        if n in SENSITIVE_NAMES:
            passthrough.append(n)
            continue
        col = X[:, j]
        mu = float(col.mean())
        sd = float(np.sqrt(np.mean((col - mu) ** 2)))
        if sd <= const_tol * max(1.0, abs(mu)):
            log.warning("dropping constant column %s", n)
            dropped.append(n)
            continue
        names.append(n)
        means.append(mu)
        scales.append(sd)
    if outputs is None:
        outputs = np.unique(y).size > 2
    om = osc = None
    if outputs:
        om = float(y.mean())
        osc = float(np.sqrt(np.mean((y - om) ** 2)))
        if osc <= const_tol * max(1.0, abs(om)):
            log.warning("outputs are constant; leaving them unscaled")
            om = osc = None
    params = StandardizationParams(
        tuple(names), tuple(means), tuple(scales), tuple(dropped), tuple(passthrough), om, osc
    )
    return params.apply(collection), params


def append_sensitive_onehot(collection: TaskCollection) -> TaskCollection:
    """Add indicator(s=1), indicator(s=2) as two trailing feature columns."""
    if collection.sensitive_encoded or any(n in SENSITIVE_NAMES for n in collection.feature_names):
        raise DoubleEncoding("sensitive one-hot columns already present")
    tasks = []
    for t in collection.tasks:
        onehot = np.column_stack([t.sensitive == 1, t.sensitive == 2]).astype(float)
        tasks.append(t.with_features(np.hstack([t.features, onehot])))
    return replace(
        collection,
        tasks=tuple(tasks),
        feature_names=collection.feature_names + SENSITIVE_NAMES,
        sensitive_encoded=True,
    )


# ---------------------------------------------------------------------------
# splits

def _stratified_order(sensitive: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g1 = rng.permutation(np.flatnonzero(sensitive == 1))
    g2 = rng.permutation(np.flatnonzero(sensitive == 2))
    return np.concatenate([g1, g2])


def split_novel_task(
    task: TaskDataset, train_fraction: float, seed: int
) -> tuple[TaskDataset, TaskDataset]:
    """Stratified random split; both parts keep both sensitive groups.

    The train part has ``round(train_fraction * m)`` rows, allocated to the
    groups proportionally.  Raises :class:`GroupDepleted` when some group is
    too small to appear on both sides.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSpec(f"train_fraction must lie in (0, 1), got {train_fraction}")
    m = task.m
    n_train = int(math.floor(train_fraction * m + 0.5))
    n1, n2 = task.group_counts()
    if n_train < 2 or m - n_train < 2 or n1 < 2 or n2 < 2:
        raise GroupDepleted(f"task {task.task_id}: cannot keep both groups on both sides")
    k1 = min(max(int(math.floor(n_train * n1 / m + 0.5)), 1), n1 - 1)
    k2 = n_train - k1
    if not 1 <= k2 <= n2 - 1:
        k2 = min(max(k2, 1), n2 - 1)
        k1 = n_train - k2
        if not 1 <= k1 <= n1 - 1:
            raise GroupDepleted(f"task {task.task_id}: cannot keep both groups on both sides")
    rng = np.random.default_rng(seed)
    g1 = rng.permutation(np.flatnonzero(task.sensitive == 1))
    g2 = rng.permutation(np.flatnonzero(task.sensitive == 2))
    train = np.sort(np.concatenate([g1[:k1], g2[:k2]]))
    test = np.sort(np.concatenate([g1[k1:], g2[k2:]]))
    return task.subset(train), task.subset(test)


def kfold(task: TaskDataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Group-stratified k-fold indices as ``(train_idx, val_idx)`` pairs.

    Rows are shuffled within each sensitive group, laid end to end, and dealt
    round-robin into folds, so fold sizes differ by at most one and each
    group is spread as evenly as possible.
    """
    if k < 2 or task.m < k:
        raise TooFewRows(f"kfold needs 2 <= k <= m (k={k}, m={task.m})")
    order = _stratified_order(task.sensitive, np.random.default_rng(seed))
    fold_of = np.empty(task.m, dtype=np.int64)
    fold_of[order] = np.arange(task.m) % k
    everything = np.arange(task.m)
    return [(everything[fold_of != j], everything[fold_of == j]) for j in range(k)]


# ---------------------------------------------------------------------------
# synthetic environments

@dataclass(frozen=True)
class SyntheticEnvSpec:
    """Meta-distribution over linear tasks sharing a fair low-rank representation.

    ``label_bias`` adds ``label_bias * <v, x>`` to every output, a signal that
    is informative but correlated with the sensitive group (0 disables it).
    """

    d: int
    r_true: int
    T: int
    m: int
    gap_direction: tuple[float, ...] | None = None
    gap_scale: float = 0.5
    noise_std: float = 0.01
    seed: int = 0
    label_bias: float = 0.0

    def validate(self) -> None:
        if self.d < 2 or self.T < 1 or self.m < 2:
            raise InvalidSpec("need d >= 2, T >= 1, m >= 2")
        if not 1 <= self.r_true <= self.d - 1:
            raise InvalidSpec("need 1 <= r_true <= d - 1")
        if self.gap_scale < 0 or self.noise_std < 0:
            raise InvalidSpec("gap_scale and noise_std must be nonnegative")
        if self.gap_direction is not None:
            v = np.asarray(self.gap_direction, dtype=float)
            if v.shape != (self.d,) or not np.linalg.norm(v) > 0:
                raise InvalidSpec("gap_direction must be a nonzero vector of length d")

    @classmethod
    def from_dict(cls, cfg: dict) -> "SyntheticEnvSpec":
        cfg = dict(cfg)
        if cfg.get("gap_direction") is not None:
            cfg["gap_direction"] = tuple(float(x) for x in cfg["gap_direction"])
        return cls(**cfg)

    @classmethod
    def load(cls, path) -> "SyntheticEnvSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    A_star: np.ndarray  # (d, r_true), orthonormal columns orthogonal to v
    B_star: np.ndarray  # (r_true, T)
    v: np.ndarray  # unit gap direction


def _environment(spec: SyntheticEnvSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if spec.gap_direction is None:
        v = rng.standard_normal(spec.d)
    else:
        v = np.asarray(spec.gap_direction, dtype=float)
    v = v / np.linalg.norm(v)
    # complete v to an orthonormal basis; the trailing d-1 columns span v-perp
    Q, _ = np.linalg.qr(np.column_stack([v, np.eye(spec.d)]))
    perp = Q[:, 1 : spec.d]
    perp = perp - np.outer(v, v @ perp)
    R, _ = np.linalg.qr(rng.standard_normal((spec.d - 1, spec.r_true)))
    A_star = perp @ R
    A_star = A_star - np.outer(v, v @ A_star)
    A_star, _ = np.linalg.qr(A_star)
    return A_star, v


def _sample_task(spec, A_star, v, b, m, rng, task_id, row_offset) -> TaskDataset:
    d = spec.d
    n1 = m // 2
    sens = np.array([1] * n1 + [2] * (m - n1))
    X = np.empty((m, d))
    for sign, rows in ((1.0, np.arange(n1)), (-1.0, np.arange(n1, m))):
        n = rows.size
        z = rng.standard_normal((n, d)) / math.sqrt(d)
        raw = sign * 0.5 * spec.gap_scale * v + z
        x = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        # antithetic pairs: reflect across the v axis so that the v-perp parts
        # cancel within each group; the group-mean gap is then parallel to v
        half = n // 2
        along = x[:half] @ v
        x[half : 2 * half] = 2.0 * np.outer(along, v) - x[:half]
        if n % 2:
            last = x[-1] @ v
            x[-1] = (1.0 if last >= 0 else -1.0) * v
        X[rows] = x
    perm = rng.permutation(m)
    X, sens = X[perm], sens[perm]
    y = X @ (A_star @ b) + spec.label_bias * (X @ v) + spec.noise_std * rng.standard_normal(m)
    y = np.clip(y, -1.0, 1.0)
    return TaskDataset(task_id, X, y, sens, row_offset + np.arange(m))


def generate_synthetic(spec: SyntheticEnvSpec) -> tuple[TaskCollection, SyntheticTruth]:
    """Sample ``spec.T`` tasks from the environment; pure function of ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    A_star, v = _environment(spec, rng)
    B_star = rng.standard_normal((spec.r_true, spec.T))
    tasks = [
        _sample_task(spec, A_star, v, B_star[:, t], spec.m, rng, f"task{t:03d}", t * spec.m)
        for t in range(spec.T)
    ]
    names = tuple(f"x{j}" for j in range(spec.d))
    coll = TaskCollection(tuple(tasks), names, name="synthetic")
    return coll, SyntheticTruth(_frozen(A_star), _frozen(B_star), _frozen(v))


def sample_tasks(
    spec: SyntheticEnvSpec, truth: SyntheticTruth, n_tasks: int, seed: int, m: int | None = None
) -> TaskCollection:
    """Fresh tasks from the same environment (same A*, v; new heads and inputs)."""
    spec.validate()
    m = spec.m if m is None else m
    rng = np.random.default_rng(seed)
    tasks = [
        _sample_task(
            spec, truth.A_star, truth.v, rng.standard_normal(spec.r_true), m, rng, f"fresh{t:04d}", t * m
        )
        for t in range(n_tasks)
    ]
    return TaskCollection(tuple(tasks), tuple(f"x{j}" for j in range(spec.d)), name="synthetic-fresh")


# ---------------------------------------------------------------------------
# canonical container

def save_collection(collection: TaskCollection, path) -> None:
    """Write a collection as a single ``.npz`` with a JSON metadata entry."""
    meta = {
        "name": collection.name,
        "task_ids": collection.task_ids,
        "feature_names": list(collection.feature_names),
        "output_levels": list(collection.output_levels),
        "output_range": list(collection.output_range),
        "sensitive_encoded": collection.sensitive_encoded,
        "schema": None if collection.schema is None else collection.schema.to_dict(),
    }
    sizes = np.array([t.m for t in collection.tasks], dtype=np.int64)
    np.savez(
        path,
        meta=np.array(json.dumps(meta)),
        sizes=sizes,
        features=np.vstack([t.features for t in collection.tasks]),
        outputs=np.concatenate([t.outputs for t in collection.tasks]),
        sensitive=np.concatenate([t.sensitive for t in collection.tasks]),
        row_ids=np.concatenate([t.row_ids for t in collection.tasks]),
    )


def load_collection(path) -> TaskCollection:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        sizes = z["sizes"]
        X, y, s, ids = z["features"], z["outputs"], z["sensitive"], z["row_ids"]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    tasks = tuple(
        TaskDataset(tid, X[a:b], y[a:b], s[a:b], ids[a:b])
        for tid, a, b in zip(meta["task_ids"], bounds[:-1], bounds[1:])
    )
    schema = None if meta["schema"] is None else Schema.from_dict(meta["schema"])
    return TaskCollection(
        tasks,
        tuple(meta["feature_names"]),
        schema=schema,
        output_levels=tuple(meta["output_levels"]),
        output_range=tuple(meta["output_range"]),
        sensitive_encoded=meta["sensitive_encoded"],
        name=meta["name"],
    )

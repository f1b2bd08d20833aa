"""Group-mean gaps, representation-level residuals, DDP and ERR."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import TaskCollection, TaskDataset
from .errors import DegenerateRange, DimensionMismatch, EmptyLevels, GroupMissing

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GroupMeanGap:
    task_id: str
    c: np.ndarray


@dataclass(frozen=True)
class FairnessReport:
    per_task_rep_residual: tuple[float, ...]
    mean_sq_residual: float
    ddp: float | None = None


def group_mean_gap(task: TaskDataset) -> GroupMeanGap:
    """Mean of group-1 feature rows minus mean of group-2 feature rows."""
    g1 = task.sensitive == 1
    g2 = ~g1
    if not g1.any() or not g2.any():
        raise GroupMissing(f"task {task.task_id} lacks a sensitive group")
    c = task.features[g1].mean(axis=0) - task.features[g2].mean(axis=0)
    return GroupMeanGap(task.task_id, c)


def collection_gaps(collection: TaskCollection, skip_missing: bool = False) -> list[GroupMeanGap]:
    gaps = []
    for t in collection.tasks:
        try:
            gaps.append(group_mean_gap(t))
        except GroupMissing:
            if not skip_missing:
                raise
            log.info("task %s has one group; no fairness constraint for it", t.task_id)
    return gaps


def gap_matrix(gaps, d: int | None = None) -> np.ndarray:
    """Stack gaps as columns of a (d, T) matrix."""
    cols = [g.c if isinstance(g, GroupMeanGap) else np.asarray(g, dtype=float) for g in gaps]
    if not cols:
        return np.zeros((0 if d is None else d, 0))
    return np.column_stack(cols)


def representation_residuals(A, gaps) -> FairnessReport:
    """Per-task ``||A^T c_t||`` and their mean square."""
    A = np.asarray(getattr(A, "A", A), dtype=float)
    C = gap_matrix(gaps, A.shape[0])
    if C.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but gaps have length {C.shape[0]}")
    res = np.linalg.norm(A.T @ C, axis=0)
    msq = float(np.mean(res**2)) if res.size else 0.0
    return FairnessReport(tuple(float(r) for r in res), msq)


def snap(predictions, output_levels) -> np.ndarray:
    """Index of the nearest level for each prediction; ties go to the lower level."""
    levels = np.sort(np.asarray(output_levels, dtype=float))
    p = np.asarray(predictions, dtype=float)
    hi = np.clip(np.searchsorted(levels, p, side="left"), 1, max(levels.size - 1, 1))
    if levels.size == 1:
        return np.zeros(p.shape, dtype=np.int64)
    lo = hi - 1
    pick_hi = (levels[hi] - p) < (p - levels[lo])
    return np.where(pick_hi, hi, lo)


def ddp(predictions, sensitive, output_levels) -> float:
    """Difference of demographic parity over a finite output set.

    ``(1/|Y|) * sum_y |P(f = y | s=1) - P(f = y | s=2)|`` where each
    prediction is first snapped to its nearest output level.
    """
    levels = np.unique(np.asarray(output_levels, dtype=float))
    if levels.size == 0:
        raise EmptyLevels("no output levels")
    s = np.asarray(sensitive)
    g1, g2 = s == 1, s == 2
    if not g1.any() or not g2.any():
        raise GroupMissing("ddp needs both sensitive groups")
    idx = snap(predictions, levels)
    p1 = np.bincount(idx[g1], minlength=levels.size) / g1.sum()
    p2 = np.bincount(idx[g2], minlength=levels.size) / g2.sum()
    return float(np.abs(p1 - p2).sum() / levels.size)


def err_metric(predictions, targets, output_range) -> float:
    """Range-normalized mean absolute error, in percent."""
    lo, hi = output_range
    if not hi > lo:
        raise DegenerateRange(f"output range ({lo}, {hi}) is empty")
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    return float(100.0 * np.mean(np.abs(p - t)) / (hi - lo))

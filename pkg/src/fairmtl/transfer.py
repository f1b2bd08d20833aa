"""Transfer a frozen representation to a novel task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TaskDataset, split_novel_task
from .errors import DimensionMismatch, InvalidSpec
from .fairness import ddp, err_metric
from .solver import Representation, _solve_spd


@dataclass(frozen=True, eq=False)
class TransferModel:
    A: Representation
    b: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return self.A.A @ self.b


def fit_new_task(A, task: TaskDataset, lam: float) -> TransferModel:
    """Ridge regression on ``A^T x`` with ``A`` held fixed.

    Minimizes ``(1/m) sum_i (y_i - <b, A^T x_i>)^2 + lam ||b||^2``, i.e.
    solves ``(A^T X^T X A + lam m I) b = A^T X^T y``.
    """
    if not isinstance(A, Representation):
        A = Representation(A)
    if not lam > 0:
        raise InvalidSpec("lam must be positive")
    if A.d != task.d:
        raise DimensionMismatch(f"representation has d={A.d}, task has d={task.d}")
    Z = task.features @ A.A
    b = _solve_spd(Z.T @ Z + lam * task.m * np.eye(A.r), Z.T @ task.outputs)
    return TransferModel(A, b)


def predict(model, features) -> np.ndarray:
    w = model.w if isinstance(model, TransferModel) else np.asarray(model, dtype=float)
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"features have {X.shape[1]} columns, model expects {w.shape[0]}")
    return X @ w


def evaluate_transfer(
    A,
    novel_task: TaskDataset,
    lam: float,
    train_fraction: float,
    seed: int,
    output_levels,
    output_range,
) -> tuple[float, float]:
    """Fit on a stratified train part of the novel task and score the rest.

    Returns ``(ERR, FAIR)`` measured on the held-out rows.
    """
    train, test = split_novel_task(novel_task, train_fraction, seed)
    model = fit_new_task(A, train, lam)
    pred = predict(model, test.features)
    return err_metric(pred, test.outputs, output_range), ddp(pred, test.sensitive, output_levels)

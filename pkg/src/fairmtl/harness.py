"""Experimental protocol: two-step model selection, same-task and new-task runs.

Every random choice is drawn from a seed derived from the master seed and
integer keys (repetition, task index, ...), so a run is a pure function of
its inputs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import TaskCollection, TaskDataset, append_sensitive_onehot, kfold, split_novel_task
from .errors import AllCombinationsFailed, FairMTLError, InvalidSpec
from .fairness import ddp, err_metric
from .solver import SolverConfig, fit_m1_output_constrained, fit_stl, fit_with_fallback
from .transfer import evaluate_transfer, fit_new_task, predict

log = logging.getLogger(__name__)

METHODS = ("STL-UnCons", "STL-Cons", "MTL-UnCons", "MTL-Cons", "M1")
TABLE1_METHODS = METHODS[:4]
TRAIN_FRACTION = 0.7
SOFT_FALLBACK_EPS = 1e-6
ERR_BANNER = (
    "ERR = 100 * mean|prediction - target| / (max output - min output), a range-normalized "
    "MAE; FAIR = difference of demographic parity after snapping predictions to the output levels."
)


def default_lambda_grid() -> tuple[float, ...]:
    return tuple(float(10.0 ** round(e, 1)) for e in np.arange(-6.0, 4.0 + 1e-9, 0.2))


def default_r_grid(d: int) -> tuple[int, ...]:
    return tuple(sorted({min(max(math.ceil(2.0**j * d), 1), d) for j in range(-4, 11)}))


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grid; ``r_grid=None`` means the default ``ceil(2^j d)`` ladder."""

    lambda_grid: tuple[float, ...] = field(default_factory=default_lambda_grid)
    r_grid: tuple[int, ...] | None = None
    folds: int = 10
    shortlist_fraction: float = 0.9
    max_outer_iters: int = 500
    rel_tol: float = 1e-7

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        if self.r_grid is not None:
            object.__setattr__(self, "r_grid", tuple(int(x) for x in self.r_grid))
        if not self.lambda_grid or (self.r_grid is not None and not self.r_grid):
            raise InvalidSpec("grids must be nonempty")
        if not 0 < self.shortlist_fraction <= 1:
            raise InvalidSpec("shortlist_fraction must lie in (0, 1]")
        if self.folds < 2:
            raise InvalidSpec("folds must be at least 2")

    def r_values(self, d: int) -> tuple[int, ...]:
        if self.r_grid is None:
            return default_r_grid(d)
        clipped = sorted({min(max(r, 1), d) for r in self.r_grid})
        if any(r > d for r in self.r_grid):
            log.info("r grid clipped to d=%d", d)
        return tuple(clipped)

    @classmethod
    def from_dict(cls, cfg: dict) -> "GridSpec":
        cfg = dict(cfg or {})
        if "lambda_grid" in cfg:
            cfg["lambda_grid"] = tuple(cfg["lambda_grid"])
        if cfg.get("r_grid") is not None:
            cfg["r_grid"] = tuple(cfg["r_grid"])
        return cls(**cfg)


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# methods

@dataclass
class FittedMethod:
    weights: dict[str, np.ndarray]
    A: np.ndarray | None = None
    mode: str = "stl"


def is_mtl(method: str) -> bool:
    return method in ("MTL-UnCons", "MTL-Cons", "M1")


def fit_method(method: str, collection: TaskCollection, lam: float, r: int | None, grid: GridSpec, seed: int):
    if method not in METHODS:
        raise InvalidSpec(f"unknown method {method!r}")
    if not is_mtl(method):
        constrained = method == "STL-Cons"
        return FittedMethod({t.task_id: fit_stl(t, lam, constrained) for t in collection.tasks})
    r = min(int(r), collection.d)
    if method == "M1":
        cfg = SolverConfig(lam, r, "none", max_outer_iters=grid.max_outer_iters, rel_tol=grid.rel_tol, seed=seed)
        res = fit_m1_output_constrained(collection, cfg)
    else:
        mode = "hard" if method == "MTL-Cons" else "none"
        cfg = SolverConfig(lam, r, mode, max_outer_iters=grid.max_outer_iters, rel_tol=grid.rel_tol, seed=seed)
        res = fit_with_fallback(collection, cfg, SOFT_FALLBACK_EPS)
    W = res.W
    return FittedMethod({tid: W[:, j] for j, tid in enumerate(collection.task_ids)}, res.A.A, res.mode)


def _pooled_scores(fitted: FittedMethod, tasks: Sequence[TaskDataset], levels, out_range):
    preds, ys, ss = [], [], []
    for t in tasks:
        preds.append(t.features @ fitted.weights[t.task_id])
        ys.append(t.outputs)
        ss.append(t.sensitive)
    p, y, s = np.concatenate(preds), np.concatenate(ys), np.concatenate(ss)
    return err_metric(p, y, out_range), ddp(p, s, levels)


# ---------------------------------------------------------------------------
# two-step selection

def select_by_rule(scores: Sequence[tuple[float, float]], shortlist_fraction: float = 0.9) -> int:
    """Index chosen by the shortlist rule.

    Keep every combination whose CV error ``e`` satisfies
    ``shortlist_fraction * e <= best``, then take the smallest fairness
    score; ties fall to smaller error, then to grid order.
    """
    if not scores:
        raise AllCombinationsFailed("no scored combinations")
    best = min(e for e, _ in scores)
    shortlist = [i for i, (e, _) in enumerate(scores) if shortlist_fraction * e <= best]
    return min(shortlist, key=lambda i: (scores[i][1], scores[i][0], i))


def _n_folds(collection: TaskCollection, k: int) -> int:
    k_eff = min(k, min(t.m for t in collection.tasks))
    if k_eff < k:
        log.info("using %d folds (smallest task has %d rows)", k_eff, k_eff)
    return k_eff


def cv_scorer(collection: TaskCollection, method: str, grid: GridSpec, seed: int) -> Callable:
    """``(lam, r) -> (mean CV ERR, mean CV FAIR)`` over stratified folds of every task."""
    k = _n_folds(collection, grid.folds)
    folds = [kfold(t, k, derive_seed(seed, i)) for i, t in enumerate(collection.tasks)]
    splits = []
    for j in range(k):
        tr = collection.with_tasks(t.subset(f[j][0]) for t, f in zip(collection.tasks, folds))
        va = [t.subset(f[j][1]) for t, f in zip(collection.tasks, folds)]
        splits.append((tr, va))

    def score(lam, r):
        errs, fairs = [], []
        for j, (tr, va) in enumerate(splits):
            fitted = fit_method(method, tr, lam, r, grid, derive_seed(seed, 1000 + j))
            e, f = _pooled_scores(fitted, va, collection.output_levels, collection.output_range)
            errs.append(e)
            fairs.append(f)
        return float(np.mean(errs)), float(np.mean(fairs))

    return score


def _select(combos, scorer, shortlist_fraction):
    ok, scores = [], []
    for lam, r in combos:
        try:
            scores.append(scorer(lam, r))
            ok.append((lam, r))
        except FairMTLError as exc:
            log.warning("skipping lam=%g r=%s: %s", lam, r, exc)
    if not ok:
        raise AllCombinationsFailed("every hyperparameter combination failed")
    return ok[select_by_rule(scores, shortlist_fraction)]


def two_step_select(
    collection: TaskCollection,
    grid: GridSpec,
    seed: int,
    method: str = "MTL-Cons",
    scorer: Callable | None = None,
) -> tuple[float, int | None]:
    """Pick ``(lam, r)``: CV error per combination, shortlist, least unfair.

    Combinations whose fit raises a package error are skipped with a
    warning.  STL methods ignore ``r`` and return ``None`` for it.
    """
    r_values = grid.r_values(collection.d) if is_mtl(method) else (None,)
    combos = [(lam, r) for lam in grid.lambda_grid for r in r_values]
    if scorer is None:
        scorer = cv_scorer(collection, method, grid, seed)
    return _select(combos, scorer, grid.shortlist_fraction)


def select_novel_lambda(task: TaskDataset, fit_w: Callable, grid: GridSpec, seed: int, levels, out_range) -> float:
    """Two-step choice of a single-task ridge parameter on ``task`` alone.

    ``fit_w(train_part, lam)`` returns the weight vector to score.
    """
    folds = kfold(task, min(grid.folds, task.m), seed)

    def scorer(lam, _r):
        errs, fairs = [], []
        for tr, va in folds:
            p = task.features[va] @ fit_w(task.subset(tr), lam)
            s = task.sensitive[va]
            errs.append(err_metric(p, task.outputs[va], out_range))
            fairs.append(ddp(p, s, levels) if (s == 1).any() and (s == 2).any() else 0.0)
        return float(np.mean(errs)), float(np.mean(fairs))

    return _select([(lam, None) for lam in grid.lambda_grid], scorer, grid.shortlist_fraction)[0]


# ---------------------------------------------------------------------------
# protocols

def _summary(values: list[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), (float(arr.std(ddof=1)) if arr.size > 1 else None)


def _row(collection, method, setting, sens, errs, fairs, details, seed) -> dict:
    em, es = _summary(errs)
    fm, fs = _summary(fairs)
    return {
        "dataset": collection.name,
        "method": method,
        "setting": setting,
        "sensitive_in_form": bool(sens),
        "repetitions": len(errs),
        "err_mean": em,
        "err_std": es,
        "fair_mean": fm,
        "fair_std": fs,
        "err_values": [float(x) for x in errs],
        "fair_values": [float(x) for x in fairs],
        "details": details,
        "seed": int(seed),
    }


def run_same_task(
    collection: TaskCollection,
    method: str,
    grid: GridSpec,
    repetitions: int = 30,
    seed: int = 0,
    sensitive_in_form: bool | None = None,
) -> dict:
    """Train on 70% of every task, test on the remaining 30% of the same tasks.

    Hyperparameters are reselected on the training part in every repetition.
    """
    sens = collection.sensitive_encoded if sensitive_in_form is None else sensitive_in_form
    errs, fairs, details = [], [], []
    for rep in range(repetitions):
        parts = [split_novel_task(t, TRAIN_FRACTION, derive_seed(seed, rep, i)) for i, t in enumerate(collection.tasks)]
        train = collection.with_tasks(p[0] for p in parts)
        test = [p[1] for p in parts]
        lam, r = two_step_select(train, grid, derive_seed(seed, rep, 10**6), method)
        fitted = fit_method(method, train, lam, r, grid, derive_seed(seed, rep, 10**6 + 1))
        e, f = _pooled_scores(fitted, test, collection.output_levels, collection.output_range)
        errs.append(e)
        fairs.append(f)
        details.append({"lam": lam, "r": r, "mode": fitted.mode})
    return _row(collection, method, "same", sens, errs, fairs, details, seed)


def held_out_sequence(T: int, repetitions: int, seed: int) -> list[int]:
    """Held-out task indices: without replacement, cycling once reps exceed T."""
    perm = np.random.default_rng(derive_seed(seed, 7)).permutation(T)
    return [int(perm[i % T]) for i in range(repetitions)]


def run_new_task(
    collection: TaskCollection,
    method: str,
    grid: GridSpec,
    repetitions: int = 30,
    seed: int = 0,
    sensitive_in_form: bool | None = None,
) -> dict:
    """Learn on all tasks but one, then transfer to the held-out task (70/30)."""
    if is_mtl(method) and collection.T < 2:
        raise InvalidSpec("new-task protocol needs T >= 2 for multitask methods")
    sens = collection.sensitive_encoded if sensitive_in_form is None else sensitive_in_form
    levels, out_range = collection.output_levels, collection.output_range
    errs, fairs, details = [], [], []
    for rep, idx in enumerate(held_out_sequence(collection.T, repetitions, seed)):
        novel = collection.tasks[idx]
        split_seed = derive_seed(seed, rep, 2 * 10**6)
        novel_train, _ = split_novel_task(novel, TRAIN_FRACTION, split_seed)
        detail = {"held_out": novel.task_id}
        if is_mtl(method):
            rest = collection.without(novel.task_id)
            lam, r = two_step_select(rest, grid, derive_seed(seed, rep, 10**6), method)
            fitted = fit_method(method, rest, lam, r, grid, derive_seed(seed, rep, 10**6 + 1))
            A = fitted.A
            lam_new = select_novel_lambda(
                novel_train, lambda tk, lm: fit_new_task(A, tk, lm).w, grid, derive_seed(seed, rep, 3), levels, out_range
            )
            e, f = evaluate_transfer(fitted.A, novel, lam_new, TRAIN_FRACTION, split_seed, levels, out_range)
            detail.update(lam=lam, r=r, lam_new=lam_new, mode=fitted.mode)
        else:
            cons = method == "STL-Cons"
            lam_new = select_novel_lambda(
                novel_train, lambda tk, lm: fit_stl(tk, lm, cons), grid, derive_seed(seed, rep, 3), levels, out_range
            )
            train, test = split_novel_task(novel, TRAIN_FRACTION, split_seed)
            w = fit_stl(train, lam_new, cons)
            p = predict(w, test.features)
            e, f = err_metric(p, test.outputs, out_range), ddp(p, test.sensitive, levels)
            detail.update(lam_new=lam_new, mode="stl")
        errs.append(e)
        fairs.append(f)
        details.append(detail)
    return _row(collection, method, "new", sens, errs, fairs, details, seed)


# ---------------------------------------------------------------------------
# report

@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"banner": ERR_BANNER, "meta": self.meta, "rows": self.rows}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(rows=list(data.get("rows", [])), meta=dict(data.get("meta", {})))


def run_protocol(
    collection: TaskCollection,
    methods: Sequence[str] = TABLE1_METHODS,
    grid: GridSpec | None = None,
    repetitions: int = 30,
    seed: int = 0,
    settings: Sequence[str] = ("same", "new"),
    sensitive_arms: Sequence[bool] = (False, True),
) -> ExperimentReport:
    """Every (method, setting, sensitive arm) combination on one dataset."""
    grid = grid or GridSpec()
    rows = []
    for sens in sensitive_arms:
        coll = append_sensitive_onehot(collection) if sens and not collection.sensitive_encoded else collection
        for setting in settings:
            runner = run_same_task if setting == "same" else run_new_task
            for method in methods:
                log.info("%s / %s / sensitive=%s", method, setting, sens)
                rows.append(runner(coll, method, grid, repetitions, seed, sens))
    meta = {
        "dataset": collection.name,
        "master_seed": int(seed),
        "repetitions": int(repetitions),
        "grid": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(grid).items()},
        "train_fraction": TRAIN_FRACTION,
        "split": "stratified by sensitive group",
        "hyperparameters": "reselected every repetition",
        "hard_mode_fallback": f"soft(epsilon={SOFT_FALLBACK_EPS})",
    }
    return ExperimentReport(rows, meta)


def _fmt(mean, std, digits):
    if std is None:
        return f"{mean:.{digits}f} ± n/a"
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


def render_table(report: ExperimentReport) -> str:
    """Aligned text table: one line per dataset/arm, ERR and FAIR per method."""
    lines = ["# " + ERR_BANNER, ""]
    methods = []
    for row in report.rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    groups: dict = {}
    for row in report.rows:
        key = (row["setting"], row["sensitive_in_form"], row["dataset"])
        groups.setdefault(key, {})[row["method"]] = row
    head = f"{'setting':<6} {'sensitive':<9} {'dataset':<14}" + "".join(
        f" | {m + ' ERR':>16} {m + ' FAIR':>18}" for m in methods
    )
    lines.append(head)
    lines.append("-" * len(head))
    for (setting, sens, dataset), by_method in sorted(groups.items(), key=lambda kv: (kv[0][0] != "same", kv[0][1], kv[0][2])):
        cells = []
        for m in methods:
            row = by_method.get(m)
            if row is None:
                cells.append(f" | {'-':>16} {'-':>18}")
            else:
                cells.append(
                    f" | {_fmt(row['err_mean'], row['err_std'], 2):>16} {_fmt(row['fair_mean'], row['fair_std'], 3):>18}"
                )
        lines.append(f"{setting:<6} {('in' if sens else 'out'):<9} {dataset:<14}" + "".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (machine-readable) and ``<path>.txt`` (table)."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".json", ".txt") else path
    js, txt = base.with_suffix(".json"), base.with_suffix(".txt")
    js.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    txt.write_text(render_table(report), encoding="utf-8")
    return js, txt


def parse_report(path) -> ExperimentReport:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    return ExperimentReport.from_dict(json.loads(path.read_text(encoding="utf-8")))

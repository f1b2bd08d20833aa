"""Alternating minimization for fair low-rank multitask regression.

The model is ``w_t = A b_t`` with a shared representation ``A`` (d x r) and
task heads ``B = [b_1 ... b_T]`` (r x T).  The objective is

    sum_t 1/(T m_t) ||y_t - X_t A b_t||^2 + lam/2 (||A||_F^2 + ||B||_F^2)

optionally subject to ``A^T c_t = 0`` (hard), to a budget on the mean squared
residual (soft), or with a quadratic penalty on it (penalty).  Both block
updates are exact dense linear solves, so the objective decreases
monotonically.

``vec(A)`` below is column-major: entry ``(k, i)`` of ``A`` sits at index
``i * d + k``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataset import TaskCollection, TaskDataset
from .errors import (
    DimensionMismatch,
    GroupMissing,
    FullSpanConstraint,
    InvalidSpec,
    SingularSystem,
    ZeroMatrix,
)
from .fairness import collection_gaps, gap_matrix, group_mean_gap

log = logging.getLogger(__name__)

MODES = ("none", "hard", "soft", "penalty")
NULL_RTOL = 1e-10
GAMMA_MAX = 1e8
BISECT_ITERS = 60


@dataclass(frozen=True, eq=False)
class Representation:
    A: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[1] < 1:
            raise InvalidSpec("representation must be a d x r matrix with r >= 1")
        if not np.isfinite(A).all():
            raise InvalidSpec("representation has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class TaskHeads:
    B: np.ndarray
    task_ids: tuple[str, ...] = ()

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or not np.isfinite(B).all():
            raise InvalidSpec("task heads must be a finite r x T matrix")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "task_ids", tuple(self.task_ids))


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of one fit.

    ``epsilon`` is the budget of the soft mode and ``gamma`` the weight of
    the penalty mode; both are ignored by the other modes.
    """

    lam: float
    r: int
    constraint_mode: str = "none"
    epsilon: float = 0.0
    gamma: float = 0.0
    max_outer_iters: int = 500
    rel_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.constraint_mode not in MODES:
            raise InvalidSpec(f"constraint_mode must be one of {MODES}")
        if not self.lam > 0 or self.r < 1 or not self.rel_tol > 0:
            raise InvalidSpec("need lam > 0, r >= 1, rel_tol > 0")
        if self.epsilon < 0 or self.gamma < 0:
            raise InvalidSpec("epsilon and gamma must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitResult:
    A: Representation
    B: TaskHeads
    objective_trace: tuple[float, ...]
    converged: bool
    constraint_residuals: tuple[float, ...]
    mode: str = "none"
    gamma: float = 0.0
    n_iters: int = 0
    config: SolverConfig | None = None

    @property
    def W(self) -> np.ndarray:
        return self.A.A @ self.B.B


# ---------------------------------------------------------------------------
# shared precomputation

class _Stats:
    """Per-task Gram matrices ``X^T X``, moments ``X^T y`` and sizes."""

    def __init__(self, collection: TaskCollection):
        self.X = [t.features for t in collection.tasks]
        self.y = [t.outputs for t in collection.tasks]
        self.G = np.stack([X.T @ X for X in self.X])
        self.h = np.stack([X.T @ y for X, y in zip(self.X, self.y)])
        self.m = np.array([X.shape[0] for X in self.X], dtype=float)
        self.T = len(self.X)
        self.d = collection.d


def _as_array(M, attr):
    return np.asarray(getattr(M, attr, M), dtype=float)


def null_space_basis(C: np.ndarray, d: int | None = None) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of ``C``.

    Singular values below ``1e-10 * sigma_max`` count as zero.
    """
    C = np.asarray(C, dtype=float)
    d = C.shape[0] if d is None else d
    if C.size == 0:
        return np.eye(d)
    U, s, _ = np.linalg.svd(C, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(d)
    rank = int(np.count_nonzero(s > NULL_RTOL * s[0]))
    return U[:, rank:]


def _solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        cf = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
        x = scipy.linalg.cho_solve(cf, g, check_finite=False)
    except np.linalg.LinAlgError:
        x = scipy.linalg.lstsq(H, g, check_finite=False)[0]
    if not np.isfinite(x).all():
        raise SingularSystem("linear system could not be solved")
    return x


def _sq_residual_mean(A: np.ndarray, C: np.ndarray) -> float:
    if C.shape[1] == 0:
        return 0.0
    return float(np.mean(np.sum((A.T @ C) ** 2, axis=0)))


# ---------------------------------------------------------------------------
# objective and block updates

def objective(A, B, collection: TaskCollection, lam: float) -> float:
    """Multitask empirical error plus ``lam/2 (||A||_F^2 + ||B||_F^2)``.

    Each task's squared loss is divided by ``T * m_t``.
    """
    A = _as_array(A, "A")
    B = _as_array(B, "B")
    T = collection.T
    if A.shape[0] != collection.d or B.shape != (A.shape[1], T):
        raise DimensionMismatch(f"A {A.shape}, B {B.shape} incompatible with d={collection.d}, T={T}")
    loss = 0.0
    for t, task in enumerate(collection.tasks):
        resid = task.outputs - task.features @ (A @ B[:, t])
        loss += resid @ resid / (T * task.m)
    return float(loss + 0.5 * lam * (np.sum(A * A) + np.sum(B * B)))


def _b_solve(A: np.ndarray, st: _Stats, lam: float) -> np.ndarray:
    r = A.shape[1]
    AGA = np.einsum("ki,tkl,lj->tij", A, st.G, A)
    rhs = st.h @ A  # (T, r)
    B = np.empty((r, st.T))
    eye = np.eye(r)
    for t in range(st.T):
        B[:, t] = _solve_spd(AGA[t] + 0.5 * lam * st.T * st.m[t] * eye, rhs[t])
    return B


def b_step(A, collection: TaskCollection, lam: float) -> TaskHeads:
    """Per-task ridge regression on the features ``X_t A``.

    Solves ``(A^T X_t^T X_t A + lam T m_t / 2 I) b_t = A^T X_t^T y_t``.
    """
    A = _as_array(A, "A")
    if A.shape[0] != collection.d:
        raise DimensionMismatch(f"A has {A.shape[0]} rows, collection has d={collection.d}")
    return TaskHeads(_b_solve(A, _Stats(collection), lam), collection.task_ids)


def _a_system(B: np.ndarray, st: _Stats, lam: float, N: np.ndarray | None = None):
    """Normal equations ``H vec(A) = g`` of the A-subproblem (in null-space coords if N)."""
    G, h = st.G, st.h
    if N is not None:
        G = np.einsum("ka,tkl,lb->tab", N, G, N)
        h = h @ N
    r, T = B.shape
    k = G.shape[1]
    w = 2.0 / (T * st.m)
    BB = (B[:, None, :] * B[None, :, :] * w).reshape(r * r, T)
    H = (BB @ G.reshape(T, k * k)).reshape(r, r, k, k).transpose(0, 2, 1, 3).reshape(r * k, r * k)
    H = 0.5 * (H + H.T)
    H[np.diag_indices_from(H)] += lam
    g = ((B * w) @ h).reshape(r * k)
    return H, g


def _unvec(x: np.ndarray, r: int) -> np.ndarray:
    return x.reshape(r, -1).T


class _SoftPath:
    """Closed-form ``A(gamma)`` for ``(H0 + gamma P) x = g`` along gamma >= 0.

    With ``H0 = L L^T`` and ``L^{-1} P L^{-T} = Q diag(lam) Q^T`` every gamma
    costs one matrix-vector product, and the mean squared residual is a
    scalar function of gamma.
    """

    def __init__(self, H0, P, g):
        L = np.linalg.cholesky(H0)
        Linv_P = scipy.linalg.solve_triangular(L, P, lower=True)
        M = scipy.linalg.solve_triangular(L, Linv_P.T, lower=True)
        ev, Q = np.linalg.eigh(0.5 * (M + M.T))
        self.ev = np.clip(ev, 0.0, None)
        self.u = Q.T @ scipy.linalg.solve_triangular(L, g, lower=True)
        self.V = scipy.linalg.solve_triangular(L.T, Q, lower=False)

    def x(self, gamma: float) -> np.ndarray:
        return self.V @ (self.u / (1.0 + gamma * self.ev))

    def residual(self, gamma: float) -> float:
        # x^T P x / 2 equals the mean squared residual
        return float(0.5 * np.sum(self.ev * (self.u / (1.0 + gamma * self.ev)) ** 2))


def soft_gamma(path: _SoftPath, epsilon: float) -> float:
    """Smallest gamma in [0, 1e8] (to bisection precision) meeting the budget."""
    if path.residual(0.0) <= epsilon:
        return 0.0
    lo, hi = 0.0, GAMMA_MAX
    if path.residual(hi) > epsilon:
        log.warning("soft budget %.3g unreachable for gamma <= %.0e", epsilon, GAMMA_MAX)
        return hi
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if path.residual(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def _a_solve(B, st, C, lam, mode, epsilon=0.0, gamma=0.0, N=None):
    """Return ``(A, gamma_used)`` for the A-subproblem."""
    r = B.shape[0]
    if mode == "hard":
        if N is None:
            N = null_space_basis(C, st.d)
        if N.shape[1] == 0:
            raise FullSpanConstraint(
                "group-mean gaps span the input space; use soft or penalty mode"
            )
        H, g = _a_system(B, st, lam, N)
        At = _unvec(_solve_spd(H, g), r)
        return N @ At, 0.0
    H, g = _a_system(B, st, lam)
    if mode == "none" or C.shape[1] == 0:
        return _unvec(_solve_spd(H, g), r), 0.0
    Sigma = C @ C.T / C.shape[1]
    P = 2.0 * np.kron(np.eye(r), Sigma)
    if mode == "penalty":
        return _unvec(_solve_spd(H + gamma * P, g), r), gamma
    if mode == "soft":
        path = _SoftPath(H, P, g)
        gam = soft_gamma(path, epsilon)
        return _unvec(path.x(gam), r), gam
    raise InvalidSpec(f"unknown mode {mode!r}")


def a_step(
    B,
    collection: TaskCollection,
    gaps,
    lam: float,
    constraint_mode: str = "none",
    epsilon: float = 0.0,
    gamma: float = 0.0,
) -> Representation:
    """Exact minimizer over A with B fixed, under the chosen constraint mode.

    ``hard`` uses the null-space method (``A = N A~`` with ``N`` an
    orthonormal basis of the complement of the gaps), ``penalty`` adds
    ``gamma * mean_t ||A^T c_t||^2``, and ``soft`` picks the smallest such
    gamma by bisection that brings the mean squared residual under
    ``epsilon``.
    """
    B = _as_array(B, "B")
    if B.shape[1] != collection.T:
        raise DimensionMismatch(f"B has {B.shape[1]} columns, collection has {collection.T} tasks")
    C = gap_matrix(gaps, collection.d)
    if C.shape[0] != collection.d:
        raise DimensionMismatch("gap length differs from feature dimension")
    A, _ = _a_solve(B, _Stats(collection), C, lam, constraint_mode, epsilon, gamma)
    return Representation(A)


def penalized_objective(A, B, collection, lam, C, gamma) -> float:
    return objective(A, B, collection, lam) + gamma * _sq_residual_mean(_as_array(A, "A"), C)


# ---------------------------------------------------------------------------
# alternating minimization

def _random_orthonormal(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    G = rng.standard_normal((n, r))
    if r <= n:
        Q, R = np.linalg.qr(G)
        return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    return G / math.sqrt(n)


def _initial_A(rng, d, r, mode, C, epsilon) -> np.ndarray:
    if mode in ("hard", "soft") and C.shape[1] > 0:
        N = null_space_basis(C, d)
        if N.shape[1] > 0:
            return N @ _random_orthonormal(rng, N.shape[1], r)
        if mode == "hard":
            raise FullSpanConstraint("group-mean gaps span the input space; use soft or penalty mode")
        A0 = _random_orthonormal(rng, d, r)
        res = _sq_residual_mean(A0, C)
        return A0 * math.sqrt(epsilon / res) if res > epsilon else A0
    return _random_orthonormal(rng, d, r)


def fit(collection: TaskCollection, config: SolverConfig) -> FitResult:
    """Alternate exact B- and A-updates from a seeded orthonormal start.

    The trace records the objective after every half-step (the penalized
    objective in penalty mode).  Iteration stops when one full sweep lowers
    the objective by less than ``rel_tol`` relative, or after
    ``max_outer_iters`` sweeps.  Tasks lacking a sensitive group contribute
    no constraint.
    """
    mode = config.constraint_mode
    lam = config.lam
    st = _Stats(collection)
    C = gap_matrix(collection_gaps(collection, skip_missing=True), collection.d)
    rng = np.random.default_rng(config.seed)
    A = _initial_A(rng, collection.d, config.r, mode, C, config.epsilon)
    N = null_space_basis(C, collection.d) if mode == "hard" else None
    gamma = config.gamma if mode == "penalty" else 0.0

    def F(A, B):
        return penalized_objective(A, B, collection, lam, C, gamma) if mode == "penalty" else objective(
            A, B, collection, lam
        )

    B = _b_solve(A, st, lam)
    f_prev = F(A, B)
    trace = [f_prev]
    converged = False
    gam_used = gamma
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        A_new, g_used = _a_solve(B, st, C, lam, mode, config.epsilon, gamma, N)
        f_half = F(A_new, B)
        if mode == "soft" and f_half > trace[-1]:
            # bisection overshoot near the optimum; keep the feasible iterate
            converged = True
            break
        A, gam_used = A_new, g_used
        trace.append(f_half)
        B = _b_solve(A, st, lam)
        f = F(A, B)
        trace.append(f)
        if f_prev - f <= config.rel_tol * max(abs(f_prev), np.finfo(float).tiny):
            converged = True
            break
        f_prev = f
    res = np.linalg.norm(A.T @ C, axis=0) if C.shape[1] else np.zeros(0)
    return FitResult(
        Representation(A),
        TaskHeads(B, collection.task_ids),
        tuple(trace),
        converged,
        tuple(float(x) for x in res),
        mode,
        float(gam_used),
        it,
        config,
    )


def fit_with_fallback(collection: TaskCollection, config: SolverConfig, epsilon: float = 1e-6) -> FitResult:
    """Hard mode, switching to soft(epsilon) when the gaps span the input space."""
    try:
        return fit(collection, config)
    except FullSpanConstraint:
        if config.constraint_mode != "hard":
            raise
        log.info("gaps span R^%d; falling back to soft(%g)", collection.d, epsilon)
        soft = SolverConfig(
            config.lam, config.r, "soft", epsilon, 0.0, config.max_outer_iters, config.rel_tol, config.seed
        )
        return fit(collection, soft)


# ---------------------------------------------------------------------------
# baselines

def fit_stl(task: TaskDataset, lam: float, constrained: bool = False) -> np.ndarray:
    """Single-task ridge ``min (1/m)||y - Xw||^2 + lam ||w||^2``.

    The constrained variant restricts ``w`` to the complement of the task's
    group-mean gap, so ``<w, c> = 0``.
    """
    X, y, m = task.features, task.outputs, task.m
    if constrained:
        c = group_mean_gap(task).c
        N = null_space_basis(c[:, None], task.d)
        Z = X @ N
        u = _solve_spd(Z.T @ Z + lam * m * np.eye(N.shape[1]), Z.T @ y)
        return N @ u
    return _solve_spd(X.T @ X + lam * m * np.eye(task.d), X.T @ y)


def _b_solve_output_constrained(A, st, lam, U) -> np.ndarray:
    """B-step with ``<b_t, A^T c_t> = 0``; column t of ``U`` is ``A^T c_t`` (NaN if unconstrained)."""
    r = A.shape[1]
    AGA = np.einsum("ki,tkl,lj->tij", A, st.G, A)
    rhs = st.h @ A
    B = np.empty((r, st.T))
    for t in range(st.T):
        H = AGA[t] + 0.5 * lam * st.T * st.m[t] * np.eye(r)
        u = U[:, t]
        if np.isnan(u).any() or not np.any(u):
            B[:, t] = _solve_spd(H, rhs[t])
            continue
        N = null_space_basis(u[:, None], r)
        if N.shape[1] == 0:
            B[:, t] = 0.0
            continue
        B[:, t] = N @ _solve_spd(N.T @ H @ N, N.T @ rhs[t])
    return B


def fit_m1_output_constrained(collection: TaskCollection, config: SolverConfig) -> FitResult:
    """Low-rank MTL with the first-moment constraint on each end model only.

    The B-step enforces ``<A b_t, c_t> = 0`` per task; the A-step is
    unconstrained, so the representation itself is not fair.  Only iterates
    that satisfy the output constraint enter the trace, and a sweep that
    would raise the objective ends the run.
    """
    lam = config.lam
    st = _Stats(collection)
    gaps = []
    for t in collection.tasks:
        try:
            gaps.append(group_mean_gap(t).c)
        except GroupMissing:
            gaps.append(np.full(collection.d, np.nan))
    Cfull = np.column_stack(gaps)
    rng = np.random.default_rng(config.seed)
    A = _random_orthonormal(rng, collection.d, config.r)

    def heads(A):
        return _b_solve_output_constrained(A, st, lam, A.T @ Cfull)

    B = heads(A)
    trace = [objective(A, B, collection, lam)]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        A_new, _ = _a_solve(B, st, np.zeros((collection.d, 0)), lam, "none")
        B_new = heads(A_new)
        f = objective(A_new, B_new, collection, lam)
        f_prev = trace[-1]
        if f > f_prev:
            converged = f - f_prev <= config.rel_tol * abs(f_prev)
            break
        A, B = A_new, B_new
        trace.append(f)
        if f_prev - f <= config.rel_tol * max(abs(f_prev), np.finfo(float).tiny):
            converged = True
            break
    valid = ~np.isnan(Cfull).any(axis=0)
    res = np.linalg.norm(A.T @ Cfull[:, valid], axis=0)
    return FitResult(
        Representation(A),
        TaskHeads(B, collection.task_ids),
        tuple(trace),
        converged,
        tuple(float(x) for x in res),
        "output",
        0.0,
        it,
        config,
    )


def renormalize(A) -> Representation:
    """Scale the representation to unit Frobenius norm."""
    A = _as_array(A, "A")
    nrm = np.linalg.norm(A)
    if nrm == 0.0:
        raise ZeroMatrix("cannot renormalize a zero representation")
    return Representation(A / nrm, normalized=True)


# ---------------------------------------------------------------------------
# persistence

def save_fit(result: FitResult, path) -> tuple[Path, Path]:
    """Write ``<path>.npz`` (A, B) and ``<path>.json`` (config, trace, residuals)."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".npz", ".json") else path
    npz, meta = base.with_suffix(".npz"), base.with_suffix(".json")
    np.savez(npz, A=np.ascontiguousarray(result.A.A), B=np.ascontiguousarray(result.B.B))
    cfg = None if result.config is None else result.config.__dict__
    info = {
        "config": cfg,
        "mode": result.mode,
        "gamma": result.gamma,
        "converged": result.converged,
        "n_iters": result.n_iters,
        "normalized": result.A.normalized,
        "task_ids": list(result.B.task_ids),
        "shape_A": list(result.A.A.shape),
        "shape_B": list(result.B.B.shape),
        "objective_trace": list(result.objective_trace),
        "constraint_residuals": list(result.constraint_residuals),
    }
    meta.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return npz, meta


def load_fit(path) -> FitResult:
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".npz", ".json") else path
    info = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    with np.load(base.with_suffix(".npz"), allow_pickle=False) as z:
        A, B = z["A"], z["B"]
    cfg = None if info["config"] is None else SolverConfig(**info["config"])
    return FitResult(
        Representation(A, info["normalized"]),
        TaskHeads(B, info["task_ids"]),
        tuple(info["objective_trace"]),
        info["converged"],
        tuple(info["constraint_residuals"]),
        info["mode"],
        info["gamma"],
        info["n_iters"],
        cfg,
    )

"""Data-dependent transfer certificates for risk and first-moment fairness.

Everything here is closed-form arithmetic on a handful of empirical
quantities: the spectral norm of the total input covariance, the spectral
norm of the mean-gap covariance, the sample sizes, and the confidence level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import TaskCollection
from .errors import InvalidInputs, NoConvergence
from .fairness import gap_matrix, representation_residuals
from .solver import renormalize


@dataclass(frozen=True)
class BoundInputs:
    lam: float
    m: int
    T: int
    r: int
    delta: float
    C_hat_norm: float
    Sigma_hat_norm: float

    def validate(self) -> None:
        if not self.lam > 0 or self.m < 1 or self.T < 1 or self.r < 1:
            raise InvalidInputs("need lam > 0 and m, T, r >= 1")
        if not 0 < self.delta <= 1:
            raise InvalidInputs("delta must lie in (0, 1]")
        if self.C_hat_norm < 0 or self.Sigma_hat_norm < 0:
            raise InvalidInputs("norms must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    risk_gap_bound: float | None = None
    fairness_gap_bound: float | None = None
    term_breakdown: dict = field(default_factory=dict)


def empirical_total_covariance(collection: TaskCollection) -> np.ndarray:
    """Average outer product of every input row across all tasks."""
    X = np.vstack([t.features for t in collection.tasks])
    C = X.T @ X / X.shape[0]
    return 0.5 * (C + C.T)


def mean_gap_covariance(gaps) -> np.ndarray:
    """``(1/T) sum_t c_t c_t^T`` over the per-task group-mean gaps."""
    Cm = gap_matrix(gaps)
    if Cm.shape[1] == 0:
        raise InvalidInputs("need at least one gap")
    S = Cm @ Cm.T / Cm.shape[1]
    return 0.5 * (S + S.T)


def spectral_norm(M, tol: float = 1e-9, max_iters: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops once the Rayleigh quotient changes by less than ``tol`` relative.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputs("matrix must be square")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(M).max(initial=0.0))):
        raise InvalidInputs("matrix must be symmetric")
    if not np.any(M):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    rho = float(v @ M @ v)
    for _ in range(max_iters):
        u = M @ v
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            # start vector fell into the kernel; restart off-axis
            v = np.ones(M.shape[0]) / math.sqrt(M.shape[0])
            continue
        v = u / nrm
        new = float(v @ M @ v)
        if abs(new - rho) <= tol * abs(new):
            return new
        rho = new
    raise NoConvergence(f"power iteration did not converge in {max_iters} iterations")


def risk_gap_bound(inputs: BoundInputs) -> BoundReport:
    inputs.validate()
    lam, m, T, d, C = inputs.lam, inputs.m, inputs.T, inputs.delta, inputs.C_hat_norm
    terms = {
        "risk_covariance": 4.0 / lam * math.sqrt(C / m),
        "risk_union": 24.0 / (lam * m) * math.sqrt(math.log(8.0 * m * T / d) / T),
        "risk_gaussian_complexity": 14.0 / lam * math.sqrt(math.log(m * T) * C / T),
        "risk_confidence": math.sqrt(2.0 * math.log(4.0 / d) / T),
    }
    return BoundReport(risk_gap_bound=math.fsum(terms.values()), term_breakdown=terms)


def fairness_gap_bound(inputs: BoundInputs) -> BoundReport:
    inputs.validate()
    L = math.log(8.0 * inputs.r**2 / inputs.delta)
    terms = {
        "fair_fast": 96.0 * L / inputs.T,
        "fair_slow": 6.0 * math.sqrt(inputs.Sigma_hat_norm * L / inputs.T),
    }
    return BoundReport(fairness_gap_bound=math.fsum(terms.values()), term_breakdown=terms)


def concentration_helpers(sum_norm: float, d_eff: int, delta: float) -> tuple[float, float]:
    """Closed forms for sums of independent PSD operators bounded by I.

    Returns ``sqrt(b) + 6 sqrt(ln(4 d^2/delta))`` (upper bound on the square
    root of the expected sum's norm) and
    ``3 sqrt(b ln(8 d^2/delta)) + 24 ln(8 d^2/delta)`` (deviation bound), where
    ``b`` is the norm of the observed sum.
    """
    if sum_norm < 0 or d_eff < 1 or not 0 < delta <= 1:
        raise InvalidInputs("need sum_norm >= 0, d_eff >= 1, delta in (0, 1]")
    l4 = math.log(4.0 * d_eff**2 / delta)
    l8 = math.log(8.0 * d_eff**2 / delta)
    return math.sqrt(sum_norm) + 6.0 * math.sqrt(l4), 3.0 * math.sqrt(sum_norm * l8) + 24.0 * l8


def bound_inputs(collection: TaskCollection, gaps, lam: float, delta: float) -> BoundInputs:
    """Assemble inputs from data; ``m`` is the smallest task size."""
    C = empirical_total_covariance(collection)
    S = mean_gap_covariance(gaps)
    return BoundInputs(
        lam=lam,
        m=min(t.m for t in collection.tasks),
        T=collection.T,
        r=min(collection.d, collection.T),
        delta=delta,
        C_hat_norm=spectral_norm(C),
        Sigma_hat_norm=spectral_norm(S),
    )


def certify(collection: TaskCollection, A, gaps, lam: float, delta: float) -> dict:
    """Both bounds plus the empirical quantities they certify, with A at unit norm."""
    inp = bound_inputs(collection, gaps, lam, delta)
    risk = risk_gap_bound(inp)
    fair = fairness_gap_bound(inp)
    An = renormalize(A)
    rep = representation_residuals(An, gaps)
    return {
        "inputs": inp.__dict__,
        "risk_gap_bound": risk.risk_gap_bound,
        "fairness_gap_bound": fair.fairness_gap_bound,
        "terms": {**risk.term_breakdown, **fair.term_breakdown},
        "empirical_mean_sq_residual": rep.mean_sq_residual,
        "m_convention": "min over tasks",
    }

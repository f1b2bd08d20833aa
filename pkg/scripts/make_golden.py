"""Regenerate the committed golden files under tests/golden/.

    python3 scripts/make_golden.py

Writes the principal-angle pilot (MTL-Cons recovery of A*) and a fixed-seed
synthetic experiment report.  Rerun only when a behaviour change is intended.
"""

import json
from pathlib import Path

import numpy as np

from fairmtl.dataset import SyntheticEnvSpec, generate_synthetic
from fairmtl.harness import GridSpec, emit_report, run_protocol
from fairmtl.solver import SolverConfig, fit

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"

RECOVERY_SPEC = SyntheticEnvSpec(d=6, r_true=2, T=20, m=200, gap_scale=0.5, noise_std=0.01, seed=0)
RECOVERY_CONFIG = SolverConfig(lam=1e-3, r=2, constraint_mode="hard", seed=0)

REPORT_SPEC = SyntheticEnvSpec(d=5, r_true=2, T=4, m=30, noise_std=0.2, label_bias=0.4, seed=1)
REPORT_GRID = GridSpec(lambda_grid=(1e-3, 1e-1), r_grid=(2, 3), folds=3)
REPORT_ARGS = dict(methods=("STL-UnCons", "MTL-UnCons", "MTL-Cons"), repetitions=2, seed=5)


def max_principal_angle(A_star, A):
    Q, _ = np.linalg.qr(A)
    s = np.linalg.svd(A_star.T @ Q, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


def recovery_angle():
    coll, truth = generate_synthetic(RECOVERY_SPEC)
    res = fit(coll, RECOVERY_CONFIG)
    return max_principal_angle(truth.A_star, res.A.A)


def golden_report():
    coll, _ = generate_synthetic(REPORT_SPEC)
    return run_protocol(coll, grid=REPORT_GRID, **REPORT_ARGS)


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    angle = recovery_angle()
    (GOLDEN / "principal_angle.json").write_text(
        json.dumps({"max_principal_angle_rad": angle, "threshold_rad": 0.2}, indent=1) + "\n"
    )
    print(f"principal angle {angle:.6g} rad")
    js, _ = emit_report(golden_report(), GOLDEN / "synthetic_report.json")
    print(f"wrote {js}")


if __name__ == "__main__":
    main()

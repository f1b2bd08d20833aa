"""Paired MTL-Cons / MTL-UnCons transfer runs on synthetic environments.

Prints per-seed novel-task ddp and ERR for both arms and the median ratios.
Usage: python3 scripts/pilot_transfer_fairness.py [--seeds 30] [--label-bias 0.4] ...
"""

import argparse
import time

import numpy as np

from fairmtl.dataset import SyntheticEnvSpec, generate_synthetic, sample_tasks
from fairmtl.solver import SolverConfig, fit_with_fallback
from fairmtl.transfer import evaluate_transfer


def paired_run(spec, lam, r, lam_new, novel_m, seed):
    coll, truth = generate_synthetic(spec)
    novel = sample_tasks(spec, truth, 1, seed=10_000 + seed, m=novel_m).tasks[0]
    out = {}
    for arm, mode in (("uncons", "none"), ("cons", "hard")):
        res = fit_with_fallback(coll, SolverConfig(lam, r, mode, seed=seed))
        out[arm] = evaluate_transfer(res.A, novel, lam_new, 0.7, seed, coll.output_levels, coll.output_range)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--r-true", type=int, default=2)
    ap.add_argument("--T", type=int, default=20)
    ap.add_argument("--m", type=int, default=100)
    ap.add_argument("--gap-scale", type=float, default=0.5)
    ap.add_argument("--noise-std", type=float, default=0.2)
    ap.add_argument("--label-bias", type=float, default=0.4)
    ap.add_argument("--lam", type=float, default=1e-3)
    ap.add_argument("--r", type=int, default=3)
    ap.add_argument("--lam-new", type=float, default=1e-3)
    ap.add_argument("--novel-m", type=int, default=300)
    a = ap.parse_args()
    t0 = time.perf_counter()
    ratios_f, ratios_e = [], []
    for s in range(a.seeds):
        spec = SyntheticEnvSpec(a.d, a.r_true, a.T, a.m, None, a.gap_scale, a.noise_std, s, a.label_bias)
        o = paired_run(spec, a.lam, a.r, a.lam_new, a.novel_m, s)
        (eu, fu), (ec, fc) = o["uncons"], o["cons"]
        ratios_f.append(fc / fu if fu > 0 else (0.0 if fc == 0 else np.inf))
        ratios_e.append(ec / eu)
        print(f"seed {s:2d}  uncons ERR {eu:6.2f} FAIR {fu:.3f}   cons ERR {ec:6.2f} FAIR {fc:.3f}")
    print(f"median FAIR ratio {np.median(ratios_f):.3f}  median ERR ratio {np.median(ratios_e):.3f}  "
          f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()

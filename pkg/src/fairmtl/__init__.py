"""Fair shared low-rank representations for multitask regression."""

from .dataset import (
    SyntheticEnvSpec,
    TaskCollection,
    TaskDataset,
    append_sensitive_onehot,
    generate_synthetic,
    kfold,
    load_csv,
    split_novel_task,
    standardize,
)
from .fairness import ddp, err_metric, group_mean_gap, representation_residuals
from .solver import (
    FitResult,
    Representation,
    SolverConfig,
    TaskHeads,
    a_step,
    b_step,
    fit,
    fit_m1_output_constrained,
    fit_stl,
    objective,
    renormalize,
)
from .transfer import TransferModel, evaluate_transfer, fit_new_task, predict

__version__ = "0.1.0"

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairmtl.dataset import TaskDataset
from fairmtl.errors import DegenerateRange, EmptyLevels, GroupMissing
from fairmtl.fairness import ddp, err_metric, group_mean_gap, representation_residuals, snap


def _task(X, s):
    X = np.asarray(X, dtype=float)
    return TaskDataset("t", X, np.zeros(len(X)), np.asarray(s))


def test_gap_hand_example():
    t = _task([[1, 0], [3, 2], [0, 0]], [1, 1, 2])
    np.testing.assert_array_equal(group_mean_gap(t).c, [2.0, 1.0])


def test_gap_zero_for_identical_means():
    t = _task([[1, 2], [3, 4], [3, 4], [1, 2]], [1, 1, 2, 2])
    np.testing.assert_array_equal(group_mean_gap(t).c, [0.0, 0.0])


def test_gap_requires_both_groups():
    with pytest.raises(GroupMissing):
        group_mean_gap(_task([[1.0], [2.0]], [1, 1]))


def test_residuals_projection_identity():
    c = np.array([3.0, 4.0, 0.0])
    rep = representation_residuals((c / 5)[:, None], [c])
    assert rep.per_task_rep_residual[0] == pytest.approx(5.0, rel=1e-15)
    orth = np.array([[0.0], [0.0], [1.0]])
    assert representation_residuals(orth, [c]).per_task_rep_residual == (0.0,)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_residuals_match_explicit_products(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 2))
    gaps = [rng.standard_normal(4) for _ in range(3)]
    rep = representation_residuals(A, gaps)
    expect = [np.sqrt(sum(sum(A[k, i] * c[k] for k in range(4)) ** 2 for i in range(2))) for c in gaps]
    np.testing.assert_allclose(rep.per_task_rep_residual, expect, rtol=1e-12)
    assert abs(rep.mean_sq_residual - np.mean(np.square(expect))) <= 1e-12 * max(1, rep.mean_sq_residual)
    # mean squared residual equals tr(A^T Sigma A)
    S = sum(np.outer(c, c) for c in gaps) / 3
    assert rep.mean_sq_residual == pytest.approx(np.trace(A.T @ S @ A), rel=1e-12)


def test_snap_ties_go_low():
    np.testing.assert_array_equal(snap([0.0, 0.1, -0.1, 5, -5], [-1, 1]), [0, 1, 0, 1, 0])


def test_ddp_hand_example():
    assert ddp([1, 1, 1, -1], [1, 1, 2, 2], [-1, 1]) == pytest.approx(0.5)


def test_ddp_identical_distributions():
    assert ddp([1, -1, 1, -1], [1, 1, 2, 2], [-1, 1]) == 0.0


def test_ddp_errors():
    with pytest.raises(EmptyLevels):
        ddp([1.0], [1], [])
    with pytest.raises(GroupMissing):
        ddp([1.0, 2.0], [1, 1], [1, 2])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 40), L=st.integers(1, 6))
def test_ddp_bounds_and_brute_force(seed, m, L):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=m) * 3
    s = np.array([1, 2] + list(rng.integers(1, 3, m - 2)))
    levels = np.sort(rng.choice(np.arange(-5, 6), L, replace=False)).astype(float)
    # brute force: nearest level, first (lowest) on ties
    near = np.array([levels[np.argmin(np.abs(levels - x))] for x in p])
    freq = lambda g: np.array([np.mean(near[s == g] == y) for y in levels])
    expect = np.abs(freq(1) - freq(2)).sum() / L
    got = ddp(p, s, levels)
    assert 0.0 <= got <= 1.0
    assert got == pytest.approx(expect, abs=1e-12)


def test_err_metric():
    assert err_metric([1, 2], [1, 2], (0, 4)) == 0.0
    assert err_metric([1, 0], [0, 1], (0, 1)) == pytest.approx(100.0)
    assert err_metric([1, 2, 3], [0, 2, 4], (0, 4)) == pytest.approx(100 * (2 / 3) / 4)
    with pytest.raises(DegenerateRange):
        err_metric([1], [1], (1, 1))

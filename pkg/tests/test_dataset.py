import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairmtl.dataset import (
    Schema,
    StandardizationParams,
    SyntheticEnvSpec,
    TaskCollection,
    TaskDataset,
    append_sensitive_onehot,
    generate_synthetic,
    kfold,
    load_collection,
    load_csv,
    sample_tasks,
    save_collection,
    split_novel_task,
    standardize,
)
from fairmtl.errors import (
    DoubleEncoding,
    GroupDepleted,
    InvalidSpec,
    MissingColumn,
    MissingValue,
    NonBinarySensitive,
    TooFewRows,
)

SCHEMA = {
    "task_column": "school",
    "columns": {"age": "numeric", "eth": "categorical", "sex": "sensitive", "score": "output"},
}


def _write(path, rows, header=("school", "age", "eth", "sex", "score")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def test_load_csv_one_hot_arithmetic(tmp_path):
    p = _write(tmp_path / "d.csv", [
        ["a", 10, "x", "F", 1.0],
        ["a", 12, "y", "M", 2.0],
        ["b", 11, "z", "F", 3.0],
        ["b", 13, "x", "M", 4.0],
    ])
    coll = load_csv(p, Schema.from_dict(SCHEMA))
    assert coll.T == 2 and coll.d == 1 + 3
    assert coll.feature_names == ("age", "eth=x", "eth=y", "eth=z")
    a = coll.task("a")
    np.testing.assert_array_equal(a.features, [[10, 1, 0, 0], [12, 0, 1, 0]])
    np.testing.assert_array_equal(a.sensitive, [1, 2])  # F sorts first
    np.testing.assert_array_equal(coll.task("b").row_ids, [2, 3])
    assert coll.output_range == (1.0, 4.0)


def test_load_csv_errors(tmp_path):
    schema = Schema.from_dict(SCHEMA)
    p = _write(tmp_path / "three.csv", [["a", 1, "x", "F", 1], ["a", 1, "x", "M", 1], ["a", 1, "x", "U", 1]])
    with pytest.raises(NonBinarySensitive):
        load_csv(p, schema)
    p = _write(tmp_path / "miss.csv", [["a", "", "x", "F", 1], ["a", 1, "x", "M", 1]])
    with pytest.raises(MissingValue):
        load_csv(p, schema)
    p = _write(tmp_path / "col.csv", [["a", 1, "F", 1]], header=("school", "age", "sex", "score"))
    with pytest.raises(MissingColumn):
        load_csv(p, schema)


def test_single_group_task_is_dropped(tmp_path, caplog):
    p = _write(tmp_path / "d.csv", [
        ["a", 10, "x", "F", 1.0],
        ["a", 12, "y", "M", 2.0],
        ["b", 11, "z", "F", 3.0],
        ["b", 13, "x", "F", 4.0],
    ])
    coll = load_csv(p, Schema.from_dict(SCHEMA))
    assert coll.task_ids == ["a"]
    assert "dropping task b" in caplog.text


def _coll(X, task_of, names=None):
    X = np.asarray(X, dtype=float)
    tasks = []
    for k in sorted(set(task_of)):
        idx = [i for i, t in enumerate(task_of) if t == k]
        s = np.array([1 + (j % 2) for j in range(len(idx))])
        tasks.append(TaskDataset(k, X[idx], np.zeros(len(idx)), s, np.array(idx)))
    return TaskCollection(tuple(tasks), names or tuple(f"f{j}" for j in range(X.shape[1])))


def test_standardize_two_point_column():
    coll, params = standardize(_coll([[2.0], [4.0]], ["a", "a"]))
    np.testing.assert_array_equal(coll.tasks[0].features[:, 0], [-1.0, 1.0])
    assert params.scales == (1.0,)


def test_standardize_pooled_statistics():
    # task a has mean 1, task b has mean 5; pooled mean 3, population sd sqrt(14/3)
    X = [[0.0], [1.0], [2.0], [4.0], [5.0], [6.0]]
    coll, params = standardize(_coll(X, ["a", "a", "a", "b", "b", "b"]))
    assert params.means[0] == pytest.approx(3.0, abs=1e-15)
    assert params.scales[0] == pytest.approx(math.sqrt(14 / 3), rel=1e-15)
    a, b = (t.features[:, 0] for t in coll.tasks)
    assert abs(np.concatenate([a, b]).mean()) < 1e-12
    assert a.mean() < -0.5 and b.mean() > 0.5


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(3, 40), d=st.integers(1, 5))
def test_standardize_moments_and_idempotence(seed, m, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(rng.uniform(-5, 5, d), rng.uniform(0.1, 10, d), size=(m, d))
    coll, _ = standardize(_coll(X, ["a"] * m))
    Z = coll.tasks[0].features
    assert np.all(np.abs(Z.mean(0)) < 1e-10)
    assert np.all(np.abs(Z.var(0) - 1) < 1e-8)
    again, _ = standardize(coll)
    np.testing.assert_allclose(again.tasks[0].features, Z, atol=1e-10)


def test_standardize_drops_constant_and_passes_sensitive(caplog):
    X = [[1.0, 3.0], [1.0, 5.0], [1.0, 7.0], [1.0, 9.0]]
    coll = append_sensitive_onehot(_coll(X, ["a"] * 4))
    out, params = standardize(coll)
    assert params.dropped == ("f0",)
    assert out.feature_names == ("f1", "sensitive=1", "sensitive=2")
    np.testing.assert_array_equal(out.tasks[0].features[:, 1:], coll.tasks[0].features[:, 2:])
    assert "constant column f0" in caplog.text


def test_standardization_params_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    coll, params = standardize(_coll(rng.standard_normal((6, 3)) * 1e3 + 1 / 3, ["a"] * 6))
    params.save(tmp_path / "p.csv")
    assert StandardizationParams.load(tmp_path / "p.csv") == params


def test_append_sensitive_onehot():
    coll = _coll([[0.0], [1.0]], ["a", "a"])
    enc = append_sensitive_onehot(coll)
    np.testing.assert_array_equal(enc.tasks[0].features[:, 1:], [[1, 0], [0, 1]])
    with pytest.raises(DoubleEncoding):
        append_sensitive_onehot(enc)


def _task(m, n1, seed=0):
    s = np.array([1] * n1 + [2] * (m - n1))
    return TaskDataset("t", np.random.default_rng(seed).standard_normal((m, 2)), np.zeros(m), s)


def test_split_sizes_and_determinism():
    t = _task(10, 5)
    tr, te = split_novel_task(t, 0.7, 3)
    assert (tr.m, te.m) == (7, 3)
    tr2, te2 = split_novel_task(t, 0.7, 3)
    assert np.array_equal(tr.row_ids, tr2.row_ids)
    with pytest.raises(InvalidSpec):
        split_novel_task(t, 1.0, 0)
    with pytest.raises(GroupDepleted):
        split_novel_task(_task(10, 1), 0.7, 0)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(4, 60), frac=st.floats(0.2, 0.8), seed=st.integers(0, 999), data=st.data())
def test_split_is_stratified_partition(m, frac, seed, data):
    n1 = data.draw(st.integers(2, m - 2))
    t = _task(m, n1)
    try:
        tr, te = split_novel_task(t, frac, seed)
    except GroupDepleted:
        return
    assert sorted(np.concatenate([tr.row_ids, te.row_ids])) == list(range(m))
    for part in (tr, te):
        assert min(part.group_counts()) >= 1


def test_kfold_shapes():
    folds = kfold(_task(10, 5), 10, 0)
    assert all(len(va) == 1 for _, va in folds)
    sizes = sorted(len(va) for _, va in kfold(_task(7, 3), 3, 0))
    assert sizes == [2, 2, 3]
    with pytest.raises(TooFewRows):
        kfold(_task(7, 3), 1, 0)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(2, 50), seed=st.integers(0, 999), data=st.data())
def test_kfold_partitions_rows(m, seed, data):
    k = data.draw(st.integers(2, m))
    folds = kfold(_task(m, max(1, m // 3)), k, seed)
    vals = np.concatenate([va for _, va in folds])
    assert sorted(vals) == list(range(m))
    for tr, va in folds:
        assert not set(tr) & set(va) and len(tr) + len(va) == m


def test_synthetic_invariants():
    spec = SyntheticEnvSpec(d=6, r_true=2, T=5, m=31, gap_scale=0.5, seed=4)
    coll, truth = generate_synthetic(spec)
    assert np.abs(truth.A_star.T @ truth.v).max() < 1e-12
    np.testing.assert_allclose(truth.A_star.T @ truth.A_star, np.eye(2), atol=1e-12)
    for t in coll.tasks:
        np.testing.assert_allclose(np.linalg.norm(t.features, axis=1), 1.0, atol=1e-12)
        assert np.abs(t.outputs).max() <= 1.0
        c = t.features[t.sensitive == 1].mean(0) - t.features[t.sensitive == 2].mean(0)
        # gaps lie along v
        assert np.linalg.norm(c - (c @ truth.v) * truth.v) < 1e-12
        assert c @ truth.v > 0


def test_synthetic_zero_gap_scale_has_small_gaps():
    coll, _ = generate_synthetic(SyntheticEnvSpec(d=6, r_true=2, T=10, m=400, gap_scale=0.0, seed=1))
    for t in coll.tasks:
        c = t.features[t.sensitive == 1].mean(0) - t.features[t.sensitive == 2].mean(0)
        assert np.linalg.norm(c) < 4 / math.sqrt(t.m)


def test_synthetic_is_pure_function_of_spec():
    spec = SyntheticEnvSpec(d=4, r_true=1, T=3, m=10, seed=9)
    a, _ = generate_synthetic(spec)
    b, _ = generate_synthetic(spec)
    for s, t in zip(a.tasks, b.tasks):
        assert np.array_equal(s.features, t.features) and np.array_equal(s.outputs, t.outputs)
    _, truth = generate_synthetic(spec)
    fresh = sample_tasks(spec, truth, 4, seed=1)
    assert fresh.T == 4 and fresh.d == 4


def test_synthetic_spec_validation():
    with pytest.raises(InvalidSpec):
        SyntheticEnvSpec(d=3, r_true=3, T=1, m=4).validate()


def test_collection_round_trip(tmp_path):
    coll, _ = generate_synthetic(SyntheticEnvSpec(d=4, r_true=1, T=3, m=10, seed=2))
    coll = append_sensitive_onehot(coll)
    save_collection(coll, tmp_path / "c.npz")
    back = load_collection(tmp_path / "c.npz")
    assert back.feature_names == coll.feature_names and back.sensitive_encoded
    for s, t in zip(coll.tasks, back.tasks):
        assert s.task_id == t.task_id
        assert np.array_equal(s.features, t.features) and np.array_equal(s.row_ids, t.row_ids)

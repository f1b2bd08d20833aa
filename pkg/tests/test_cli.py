import json

import numpy as np
import pytest
import yaml

from fairmtl.cli import main

ENV = {"d": 5, "r_true": 2, "T": 4, "m": 30, "noise_std": 0.2, "label_bias": 0.4, "seed": 1}
RUN = {"lambda_grid": [0.01], "r_grid": [2], "folds": 3, "repetitions": 1, "methods": ["STL-UnCons", "MTL-Cons"]}


@pytest.fixture
def ws(tmp_path, monkeypatch):
    monkeypatch.setenv("FAIRMTL_OUTPUT_DIR", str(tmp_path / "out"))
    (tmp_path / "env.yaml").write_text(yaml.safe_dump(ENV))
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(RUN))
    assert main(["synth", "--spec", str(tmp_path / "env.yaml")]) == 0
    return tmp_path


def test_train_transfer_bounds(ws, capsys):
    data = str(ws / "out" / "synthetic.npz")
    assert main(["train", "--data", data, "--lam", "0.01", "--r", "2", "--mode", "hard"]) == 0
    assert (ws / "out" / "fit.npz").exists() and (ws / "out" / "fit.json").exists()
    capsys.readouterr()
    assert main(["transfer", "--fit", str(ws / "out" / "fit"), "--data", data, "--task", "task000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["FAIR"] <= 1 and out["ERR"] >= 0
    assert main(["bounds", "--fit", str(ws / "out" / "fit"), "--data", data, "--out", str(ws / "b.json")]) == 0
    b = json.loads((ws / "b.json").read_text())
    assert b["empirical_mean_sq_residual"] < 1e-16


def test_run_is_byte_identical(ws):
    data = str(ws / "out" / "synthetic.npz")
    for name in ("a", "b"):
        assert main(["--config", str(ws / "run.yaml"), "run", "--data", data, "--out", str(ws / name)]) == 0
    assert (ws / "a.json").read_bytes() == (ws / "b.json").read_bytes()
    assert (ws / "a.txt").read_bytes() == (ws / "b.txt").read_bytes()


def test_config_after_subcommand_and_flag_override(ws, capsys):
    data = str(ws / "out" / "synthetic.npz")
    (ws / "g.yaml").write_text(yaml.safe_dump({"lambda_grid": [0.5], "r_grid": [3], "folds": 3}))
    assert main(["gridsearch", "--data", data, "--config", str(ws / "g.yaml"), "--lambda-grid", "0.25"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"lam": 0.25, "method": "MTL-Cons", "r": 3}


def test_exit_codes(ws):
    data = str(ws / "out" / "synthetic.npz")
    assert main(["train", "--data", str(ws / "missing.npz"), "--lam", "1", "--r", "2"]) == 2
    assert main(["train", "--data", data, "--lam", "-1", "--r", "2"]) == 2
    assert main(["train"]) == 2
    # three random tasks in two dimensions: the gaps span the input space
    rng = np.random.default_rng(0)
    lines = ["task,u,v,g,y"] + [
        f"{t},{rng.normal():.6f},{rng.normal():.6f},{'ab'[i % 2]},{rng.normal():.6f}" for t in "xyz" for i in range(6)
    ]
    (ws / "wide.csv").write_text("\n".join(lines) + "\n")
    schema = {"task_column": "task", "columns": {"u": "numeric", "v": "numeric", "g": "sensitive", "y": "output"}}
    (ws / "wide.yaml").write_text(yaml.safe_dump(schema))
    assert main(["ingest", "--csv", str(ws / "wide.csv"), "--schema", str(ws / "wide.yaml")]) == 0
    wide = str(ws / "out" / "wide.npz")
    assert main(["train", "--data", wide, "--lam", "1", "--r", "1", "--mode", "hard"]) == 3
    assert main(["train", "--data", wide, "--lam", "1", "--r", "1", "--mode", "soft", "--epsilon", "1e-6"]) == 0


def test_report_renders(ws, capsys):
    data = str(ws / "out" / "synthetic.npz")
    assert main(["--config", str(ws / "run.yaml"), "run", "--data", data, "--settings", "new"]) == 0
    capsys.readouterr()
    assert main(["report", "--input", str(ws / "out" / "report.json")]) == 0
    assert "MTL-Cons FAIR" in capsys.readouterr().out

import json
import math
import os

import numpy as np
import pytest

from conftest import DATA_DIR
from readout_mdl.cli import main
from readout_mdl.core import FeatureSequence, LossMatrix
from readout_mdl.fileio import read_loss_matrix, write_feature_file, write_loss_matrix

GRID = '{"hidden_layers": [0, 1], "learning_rate": [0.001, 0.01], "trainer": {"batch_size": 8, "n_streams": 4}}'


@pytest.fixture
def features(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 4, size=64)
    x = rng.normal(size=(64, 8)) + y[:, None]
    path = tmp_path / "tiny.pqsf"
    write_feature_file(path, FeatureSequence(x, y, 4, "tiny"))
    return path


def test_stage1_shape_and_determinism(tmp_path, features):
    out = str(tmp_path / "l.pqlm")
    assert main(["--seed", "3", "stage1", "--features", str(features), "--grid", GRID, "--out", out]) == 0
    lm = read_loss_matrix(out)
    assert (lm.n_steps, lm.n_experts) == (64, 4)
    first = open(out, "rb").read()
    assert main(["--seed", "3", "stage1", "--features", str(features), "--grid", GRID, "--out", out]) == 0
    assert open(out, "rb").read() == first
    meta = json.load(open(out + ".json"))
    assert meta["seed"] == 3 and meta["diverged_experts"] == []


def test_stage1_missing_file(tmp_path, capsys):
    missing = str(tmp_path / "absent.pqsf")
    assert main(["stage1", "--features", missing, "--grid", GRID, "--out", str(tmp_path / "o")]) == 2
    assert missing in capsys.readouterr().err


def test_stage1_bad_grid(tmp_path, features):
    assert main(["stage1", "--features", str(features), "--grid", '{"depth": 3}', "--out", str(tmp_path / "o")]) == 2


def test_stage2_single_expert(tmp_path):
    path = str(tmp_path / "one.pqlm")
    write_loss_matrix(path, LossMatrix([[0.7], [0.2], [0.5]]))
    out = tmp_path / "r.json"
    assert main(["stage2", "--losses", path, "--strategy", "fixed-share-dec:m=2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    sec = doc["strategies"][0]
    assert sec["total_nats"] == pytest.approx(1.4, abs=1e-12)
    assert abs(sec["per_example_nats"] - sec["total_nats"] / 3) <= 1e-12


def test_stage2_sweep_and_catch_up(tmp_path):
    rng = np.random.default_rng(0)
    L = rng.uniform(0.4, 0.6, size=(2000, 2))
    L[:1000, 0] -= 0.3
    L[1000:, 1] -= 0.3
    path = str(tmp_path / "shift.pqlm")
    write_loss_matrix(path, LossMatrix(L))
    out, post, curves = tmp_path / "r.json", tmp_path / "p.csv", tmp_path / "c.csv"
    argv = ["stage2", "--losses", path, "--sweep", "--out", str(out), "--posterior-out", str(post),
            "--curves-out", str(curves)]
    assert main(argv) == 0
    doc = json.loads(out.read_text())
    kinds = [s["strategy"] for s in doc["strategies"]]
    assert kinds == ["fixed-share-dec:m=2", "bayes", "elementwise", "switch:kappa=0.5"]
    totals = {s["strategy"]: s["total_nats"] for s in doc["strategies"]}
    assert totals["fixed-share-dec:m=2"] < totals["bayes"]
    assert all("regret_vs_baseline" in s for s in doc["strategies"][1:])
    assert len(post.read_text().splitlines()) == 2001
    assert curves.read_text().startswith("step,")


def test_stage2_k_mismatch(tmp_path):
    path = str(tmp_path / "two.pqlm")
    write_loss_matrix(path, LossMatrix(np.ones((3, 2))))
    assert main(["stage2", "--losses", path, "--strategy", "bayes:K=3", "--out", str(tmp_path / "r")]) == 2
    assert main(["stage2", "--losses", path, "--strategy", "nonsense", "--out", str(tmp_path / "r")]) == 2


def write_spec(tmp_path, **kw):
    spec = {"source": {"family": "bernoulli", "segments": [{"start": 0, "p": 0.3}]},
            "experts": [{"family": "bernoulli", "smoothing": 0.5}], "horizon": 2000, "n_trials": 5}
    spec.update(kw)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec))
    return str(p)


def test_synth_regret(tmp_path):
    out = tmp_path / "r.json"
    assert main(["synth-regret", write_spec(tmp_path), "--out", str(out), "--curves-out", str(tmp_path / "c.csv")]) == 0
    reg = json.loads(out.read_text())["regret"]
    assert {"slope", "slope_stderr", "grid", "mean_regret", "constant_regret"} <= set(reg)


def test_synth_regret_zero_trials(tmp_path, capsys):
    assert main(["synth-regret", write_spec(tmp_path, n_trials=0), "--out", str(tmp_path / "r")]) == 2
    assert "n_trials must be ≥ 1" in capsys.readouterr().err


def test_synth_regret_deterministic_source(tmp_path):
    spec = write_spec(tmp_path, source={"family": "gaussian", "segments": [{"start": 0, "mean": 0.5, "std": 0.0}]},
                      experts=[{"family": "gaussian", "variance": 1.0}], horizon=5000, n_trials=1)
    out = tmp_path / "r.json"
    assert main(["synth-regret", spec, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["regret"]["constant_regret"] is True


def test_synth_regret_seed_override(tmp_path):
    spec = write_spec(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["--seed", "7", "synth-regret", spec, "--out", str(a)]) == 0
    assert main(["--seed", "7", "synth-regret", spec, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["seed"] == 7


def test_rank_single_dataset_and_ties(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("dataset,a,b,c\nx,0.3,0.3,0.1\n")
    out = tmp_path / "r.json"
    assert main(["rank", "--scores", str(p), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["average_ranks"] == [2.5, 2.5, 1.0]
    assert main(["rank", "--scores", str(p), "--orientation", "higher", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["average_ranks"] == [1.5, 1.5, 3.0]


def test_rank_ragged(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("dataset,a,b\nx,1,2\ny,1\n")
    assert main(["rank", "--scores", str(p), "--out", str(tmp_path / "r")]) == 2


def test_rank_published_table_critical_difference(tmp_path):
    out = tmp_path / "r.json"
    src = os.path.join(DATA_DIR, "codelength_per_example_6.csv")
    assert main(["rank", "--scores", src, "--transpose", "--q-gamma", "3.12", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["critical_difference"] == pytest.approx(1.894, abs=1e-3)
    assert doc["order"][0] == "ViT/B16 DINO"
    assert doc["n_datasets"] == 19


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["stage2"])
    assert exc.value.code == 2

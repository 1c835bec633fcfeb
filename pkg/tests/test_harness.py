import json
import math
from pathlib import Path

import numpy as np
import pytest

from explainleak.attackkit import MembershipMatrix, ScoreMatrix, build_split_plan
from explainleak.evalkit import RunMetrics
from explainleak.explainkit import Method, ScoreKind
from explainleak.harness import io
from explainleak.harness.cli import main
from explainleak.harness.config import (
    ConfigError,
    ExperimentConfig,
    dump_config,
    load_config,
    parse_config,
    with_overrides,
)
from explainleak.harness.data import gen_synthetic_blobs, load_csv, save_csv
from explainleak.harness.experiment import derive_seed, replay, run_experiment
from explainleak.modelkit import TrainConfig, evaluate, sgd_train
from explainleak.numcore import MlpConfig

MINIMAL = """
[experiment]
seed = 3

[data]
n = 64
d = 4
separation = 2.0

[model]
hidden_sizes = 8

[train]
learning_rate = 0.05
epochs = 4
minibatch_size = 8

[attack]
methods = IXG, GS
kinds = Variance, L1, L2, Loss
n_shadow = 2
"""


def strip_time(report_path):
    d = json.loads(Path(report_path).read_text())
    d.pop("created")
    return d


def artifact_bytes(out):
    out = Path(out)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name not in ("report.json", "MANIFEST"))
    return {str(p.relative_to(out)): p.read_bytes() for p in files}


# ---------------------------------------------------------------- data

def test_blobs_shape_balance_determinism():
    a = gen_synthetic_blobs(40, 6, 4, 3.0, 1)
    assert a.X.shape == (40, 6) and np.all(np.bincount(a.y) == 10)
    b = gen_synthetic_blobs(40, 6, 4, 3.0, 1)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    with pytest.raises(ValueError):
        gen_synthetic_blobs(41, 6, 2, 1.0, 0)


def test_blob_means_at_requested_distance():
    ds = gen_synthetic_blobs(20000, 8, 2, 4.0, 0)
    m0, m1 = ds.X[ds.y == 0].mean(0), ds.X[ds.y == 1].mean(0)
    assert np.linalg.norm(m0 - m1) == pytest.approx(4.0, abs=0.1)
    assert ds.X[ds.y == 0].std(0) == pytest.approx(np.ones(8), abs=0.05)


def test_well_separated_blobs_are_learnable():
    train = gen_synthetic_blobs(200, 8, 2, 10.0, 0)
    test = gen_synthetic_blobs(200, 8, 2, 10.0, 0)
    cfg = MlpConfig(8, (), 2)
    p = sgd_train(train, cfg, TrainConfig(0.1, 10, 16, seed=0))
    assert evaluate(p, test)[0] > 0.95


def test_zero_separation_is_chance():
    ds = gen_synthetic_blobs(2000, 4, 2, 0.0, 0)
    half = np.arange(2000) < 1000
    p = sgd_train(ds.subset(half), MlpConfig(4, (8,), 2), TrainConfig(0.05, 5, 32, seed=0))
    assert abs(evaluate(p, ds.subset(~half))[0] - 0.5) < 0.06


def test_csv_round_trip(tmp_path):
    ds = gen_synthetic_blobs(10, 3, 2, 1.0, 0)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", standardize_features=False)
    assert np.max(np.abs(back.X - ds.X)) < 1e-12 and np.array_equal(back.y, ds.y)


def test_csv_hand_file(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("a,b,label\n1,2,0\n3,2,1\n5,2,0\n")
    ds = load_csv(f, standardize_features=False)
    assert np.array_equal(ds.X, [[1, 2], [3, 2], [5, 2]]) and list(ds.y) == [0, 1, 0]
    std = load_csv(f)
    assert np.allclose(std.X[:, 0], [-np.sqrt(1.5), 0, np.sqrt(1.5)])
    assert np.all(std.X[:, 1] == 0)


def test_csv_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("a,label\n1,0\nx,1\n")
    with pytest.raises(ValueError, match=r"csv:3: .*column .a."):
        load_csv(f)
    f.write_text("a,b\n1,0\n")
    with pytest.raises(ValueError, match="label"):
        load_csv(f)


# ---------------------------------------------------------------- matrices

def test_score_matrix_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    sm = ScoreMatrix(rng.lognormal(size=(7, 4)) * 10.0 ** rng.integers(-8, 8, size=(7, 4)), ScoreKind.L2, Method.IG)
    io.save_matrix(tmp_path / "s.csv", sm)
    back = io.load_scores(tmp_path / "s.csv", ScoreKind.L2, Method.IG)
    assert np.array_equal(back.scores, sm.scores)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "example_id,m0,m1,m2,m3"


def test_membership_round_trip(tmp_path):
    mm = build_split_plan(12, 5, 0)
    io.save_matrix(tmp_path / "m.csv", mm)
    back = io.load_membership(tmp_path / "m.csv")
    assert np.array_equal(back.flags, mm.flags) and np.all(back.flags.sum(0) == 6)


def test_hand_matrix_file(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("example_id,m0,m1,m2\n0,0.5,1,2.25\n1,3,-4,1e-3\n")
    sm = io.load_scores(f, ScoreKind.L1)
    assert np.array_equal(sm.scores, [[0.5, 1, 2.25], [3, -4, 0.001]])


def test_malformed_matrix(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("example_id,m0,m1\n0,1\n")
    with pytest.raises(ValueError):
        io.load_scores(f, ScoreKind.L1)
    f.write_text("id,m0\n0,1\n")
    with pytest.raises(ValueError):
        io.load_scores(f, ScoreKind.L1)


# ---------------------------------------------------------------- config

def test_config_parse_and_dump_round_trip():
    cfg = parse_config(MINIMAL)
    assert cfg.seed == 3 and cfg.data.n == 64 and cfg.hidden_sizes == (8,)
    assert cfg.attack.methods == (Method.IXG, Method.GS) and cfg.n_models == 3
    again = parse_config(dump_config(cfg))
    assert again.to_dict() == cfg.to_dict()


def test_config_dp_and_overrides():
    cfg = parse_config(MINIMAL + "\n[dp]\nepsilon = 2.0\n")
    assert cfg.dp.epsilon == 2.0
    assert with_overrides(cfg, epsilon=math.inf).dp is None
    o = with_overrides(parse_config(MINIMAL), seed=9, epochs=2, n_shadow=4, epsilon=1.0)
    assert (o.seed, o.train.epochs, o.attack.n_shadow, o.dp.epsilon) == (9, 2, 4, 1.0)


@pytest.mark.parametrize("bad", [
    "[bogus]\nx = 1\n",
    "[data]\nn = 63\n",
    "[train]\nlearning_rate = -1\n",
    "[attack]\nmethods = LIME\n",
    "[attack]\nn_shadow = 1\n",
    "[model]\nactivation = relu\n",
    "[data]\nwidth = 3\n",
    "not an ini file",
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


# ---------------------------------------------------------------- end to end

@pytest.fixture(scope="module")
def minimal_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "cfg.ini").write_text(MINIMAL)
    cfg = load_config(root / "cfg.ini")
    report = run_experiment(cfg, root / "w1", workers=1)
    run_experiment(cfg, root / "w3", workers=3)
    return root, report


def test_minimal_run_outputs(minimal_run):
    root, report = minimal_run
    out = root / "w1"
    d = json.loads((out / "report.json").read_text())
    assert d["config"] == parse_config(MINIMAL).to_dict()
    expected = {f"{a}/{m}" for a in ("var_lrt", "l1_lrt", "l2_lrt", "threshold") for m in ("IXG", "GS")}
    assert set(d["attacks"]) == expected | {"loss_lira/na"}
    assert all(c["run_count"] == 3 for c in d["attacks"].values())
    assert (out / "MANIFEST").read_text().startswith("status: complete")
    for name in ("membership.csv", "scores_IXG_L1.csv", "scores_GS_Variance.csv", "scores_loss.csv"):
        assert (out / name).exists()


def test_worker_count_does_not_change_artifacts(minimal_run):
    root, _ = minimal_run
    assert artifact_bytes(root / "w1") == artifact_bytes(root / "w3")
    assert strip_time(root / "w1" / "report.json") == strip_time(root / "w3" / "report.json")


def test_roc_files_match_report(minimal_run):
    root, _ = minimal_run
    out = root / "w1"
    d = json.loads((out / "report.json").read_text())
    for name, cell in d["attacks"].items():
        for run in cell["runs"]:
            stem = f"{cell['attack']}_{cell['method']}_run{run['target_model']}.csv"
            curve = io.load_roc(out / f"roc_{stem}")
            assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
            m = RunMetrics.from_curve(curve)
            assert (m.tpr_at_fpr_001, m.tpr_at_fpr_01, m.auc) == (
                run["tpr_at_fpr_0.001"], run["tpr_at_fpr_0.01"], run["auc"])
            log_curve = io.load_roc(out / f"roc_logaxis_{stem}")
            assert log_curve.fpr.min() > 0


def test_replay_reproduces_report(minimal_run, tmp_path):
    root, _ = minimal_run
    replay(root / "w1", tmp_path)
    assert strip_time(tmp_path / "report.json") == strip_time(root / "w1" / "report.json")


def test_derive_seed_distinct():
    seeds = {derive_seed(0, 10, m) for m in range(50)} | {derive_seed(1, 10, m) for m in range(50)}
    assert len(seeds) == 100


def test_manifest_on_failure(tmp_path):
    cfg = parse_config(MINIMAL.replace("minibatch_size = 8", "minibatch_size = 40"))
    with pytest.raises(Exception) as info:
        run_experiment(cfg, tmp_path, workers=1)
    assert getattr(info.value, "stage", None) == "train"
    manifest = (tmp_path / "MANIFEST").read_text()
    assert "status: incomplete" in manifest and "failed_stage: train" in manifest
    assert "config.ini" in manifest


# ---------------------------------------------------------------- CLI

def test_cli_run_report_replay(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r"), "--epochs", "2"]) == 0
    assert "l1_lrt" in capsys.readouterr().out
    assert main(["report", "--out", str(tmp_path / "r")]) == 0
    assert main(["replay", "--from", str(tmp_path / "r"), "--out", str(tmp_path / "rr")]) == 0
    assert strip_time(tmp_path / "rr" / "report.json") == strip_time(tmp_path / "r" / "report.json")


def test_cli_train_then_attack(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    out = str(tmp_path / "t")
    assert main(["train", "--config", str(cfg), "--out", out]) == 0
    assert (tmp_path / "t" / "MANIFEST").read_text().startswith("status: trained")
    assert main(["attack", "--config", str(cfg), "--out", out]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "u")]) == 0
    assert artifact_bytes(out) == artifact_bytes(tmp_path / "u")


def test_cli_gen_data(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(load_csv(tmp_path / "data.csv")) == 64


def test_cli_dp_sweep(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL.replace("methods = IXG, GS", "methods = IXG").replace("epochs = 4", "epochs = 1"))
    assert main(["dp-sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--grid", "8,inf"]) == 0
    sweep = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert set(sweep) == {"8", "inf"}
    assert sweep["8"]["models"]["private"] and not sweep["inf"]["models"]["private"]
    assert main(["report", "--out", str(tmp_path / "s")]) == 0


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[data]\nn = 63\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "--out", str(tmp_path / "x"), "--workers", "0"]) == 2
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL.replace("minibatch_size = 8", "minibatch_size = 40"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 3
    assert main(["replay", "--from", str(tmp_path / "nothing"), "--out", str(tmp_path / "z")]) in (2, 3)

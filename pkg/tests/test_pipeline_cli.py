import csv
import json
import re
from dataclasses import replace

import numpy as np
import pytest

from ppgmorph import cli, config, pipeline
from ppgmorph.errors import ArgumentError, FileError
from ppgmorph.io import load_feature_matrix

SMALL = """
seed = 3
[synth]
n_subjects = 60
duration_s = 40.0
[train]
epochs = 4
models = ["logistic", "ffnn", "linear"]
"""


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.toml"
    p.write_text(SMALL)
    return p


@pytest.fixture(scope="module")
def run(small_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    res = pipeline.run_pipeline(config.load_config(small_cfg), out)
    return res


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ---------------------------------------------------------------------


def test_config_file_overrides(small_cfg):
    cfg = config.load_config(small_cfg)
    assert cfg.seed == 3 and cfg.synth.n_subjects == 60 and cfg.train.epochs == 4
    assert cfg.features.k == 26 and cfg.train.tasks == ("binary", "three_class", "regression")


def test_config_errors(tmp_path):
    with pytest.raises(ArgumentError, match="train.epoch"):
        config.from_dict({"train": {"epoch": 3}})
    with pytest.raises(ArgumentError):
        config.from_dict({"train": {"tasks": ["quad"]}})
    with pytest.raises(FileError):
        config.load_config(tmp_path / "nope.toml")


def test_json_and_toml_agree(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"seed": 5, "beats": {"corr_gate": 0.7}}))
    (tmp_path / "a.toml").write_text("seed = 5\n[beats]\ncorr_gate = 0.7\n")
    assert config.load_config(tmp_path / "a.json") == config.load_config(tmp_path / "a.toml")


# -- full run ----------------------------------------------------------------------------


def test_artifacts_exist(run):
    out = run.out_dir
    m = run.manifest
    assert m["status"] == "complete"
    for name in m["artifacts"]:
        assert (out / name).exists(), name
    for name in ("features.csv", "ranking.json", "metrics.json", "loss_curves.csv", "auc_table.csv",
                 "confusion.csv", "regression_scatter.csv", "regression_scatter.svg"):
        assert name in m["artifacts"]
    assert set(m["timings_s"]) >= {"extract", "rank", "augment", "report"}
    assert m["seeds"] == {"run": 3, "synth": 3}
    assert m["inputs"]["source"] == "synthetic"


def test_dataset_shapes(run):
    d = run.metrics["dataset"]
    assert d["n_augmented"] == 15 * d["n_subjects"]
    assert len(d["kept_features"]) == 26
    feats = load_feature_matrix(run.out_dir / "features.csv")
    assert feats.n == d["n_subjects"] and feats.X.shape[1] == 60


def test_metrics_per_task(run):
    t = run.metrics["tasks"]
    assert set(t["binary"]) == {"logistic", "ffnn"}
    assert set(t["regression"]) == {"linear", "ffnn"}
    assert np.array(t["binary"]["ffnn"]["confusion"]).shape == (2, 2)
    assert np.array(t["three_class"]["ffnn"]["confusion"]).shape == (3, 3)
    for task in ("binary", "three_class"):
        for m in t[task].values():
            assert 0 <= m["accuracy"] <= 1 and 0 <= m["auc"] <= 1
    assert t["regression"]["ffnn"]["mae"] >= 0


def test_loss_curve_table(run):
    rows = _rows(run.out_dir / "loss_curves.csv")
    assert rows[0] == ["task", "model", "epoch", *pipeline.CURVE_COLUMNS]
    assert len(rows) == 1 + 6 * 4
    first = dict(zip(rows[0], rows[1]))
    assert first["epoch"] == "1" and first["train_mae"] == "" and float(first["val_auc"]) >= 0


def test_confusion_table(run):
    rows = _rows(run.out_dir / "confusion.csv")
    assert rows[0] == ["true\\pred", "3-15", "15+"]
    for r in rows[1:]:
        assert sum(map(float, r[1:])) == pytest.approx(100.0)


def test_single_task_run_and_rerun(small_cfg, tmp_path):
    cfg = config.load_config(small_cfg)
    cfg = replace(cfg, train=replace(cfg.train, tasks=("binary",), models=("ffnn",), epochs=2))
    a = pipeline.run_pipeline(cfg, tmp_path / "a")
    b = pipeline.run_pipeline(cfg, tmp_path / "b")
    assert list(a.metrics["tasks"]) == ["binary"]
    assert (tmp_path / "a/metrics.json").read_bytes() == (tmp_path / "b/metrics.json").read_bytes()
    assert a.manifest["metrics_sha256"] == b.manifest["metrics_sha256"]


def test_incomplete_manifest_on_failure(tmp_path):
    cfg = replace(config.PipelineConfig(), input_dir=str(tmp_path / "empty"))
    (tmp_path / "empty").mkdir()
    with pytest.raises(pipeline.StageError):
        pipeline.run_pipeline(cfg, tmp_path / "out")
    m = json.loads((tmp_path / "out/manifest.json").read_text())
    assert m["status"] == "incomplete" and m["failed_stage"] == "acquire"


# -- command line -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cohort(tmp_path_factory, small_cfg):
    out = tmp_path_factory.mktemp("cohort")
    assert cli.main(["--config", str(small_cfg), "synth", "--n", "24", "--out", str(out)]) == 0
    return out


def test_cli_synth_writes_recordings(cohort):
    assert len(list(cohort.glob("S*.csv"))) == 24
    assert len(list(cohort.glob("S*.json"))) == 24


def test_cli_stage_by_stage(cohort, tmp_path, capsys):
    rec = cohort / "S0000.csv"
    tpl = tmp_path / "t.csv"
    assert cli.main(["beats", str(rec), "--out", str(tpl)]) == 0
    side = json.loads(tpl.with_suffix(".json").read_text())
    assert side["n_beats_averaged"] >= 10 and side["fs_equiv"] > 0
    fid_json = tmp_path / "fid.json"
    assert cli.main(["fiducials", str(tpl), "--out", str(fid_json), "--svg", str(tmp_path / "d.svg")]) == 0
    fid = json.loads(fid_json.read_text())
    assert fid["O"] is not None and fid["S"] is not None

    pre = tmp_path / "pre.csv"
    assert cli.main(["preprocess", str(rec), "--out", str(pre)]) == 0
    assert len(_rows(pre)) == 1 + 40 * 400

    feats = tmp_path / "f.csv"
    assert cli.main(["extract", "--input-dir", str(cohort), "--out", str(feats)]) == 0
    ranked = tmp_path / "r.csv"
    assert cli.main(["rank", str(feats), "--k", "10", "--out", str(ranked)]) == 0
    assert load_feature_matrix(ranked).X.shape[1] == 10
    aug = tmp_path / "a.csv"
    assert cli.main(["augment", str(ranked), "--factor", "3", "--out", str(aug)]) == 0
    assert load_feature_matrix(aug).n == 3 * load_feature_matrix(ranked).n

    mdir = tmp_path / "m"
    assert cli.main(["train", str(aug), "--model", "ffnn", "--task", "three-class",
                     "--epochs", "3", "--out", str(mdir)]) == 0
    assert (mdir / "ffnn_three_class.json").exists() and (mdir / "loss_curves.csv").exists()
    capsys.readouterr()
    assert cli.main(["eval", str(mdir / "ffnn_three_class.json"), str(mdir / "test_split.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    saved = json.loads((mdir / "ffnn_three_class.json").read_text())["test_metrics"]
    assert out["accuracy"] == saved["accuracy"]


def test_cli_pipeline_binary_only(small_cfg, tmp_path):
    out = tmp_path / "run"
    code = cli.main(["pipeline", "--config", str(small_cfg), "--task", "binary", "--models", "logistic",
                     "--epochs", "2", "--n", "40", "--out", str(out)])
    assert code == 0
    m = json.loads((out / "metrics.json").read_text())
    assert list(m["tasks"]) == ["binary"] and m["dataset"]["n_subjects"] <= 40


def test_cli_missing_input_exit_code(tmp_path, capsys):
    assert cli.main(["fiducials", str(tmp_path / "nope.csv")]) == 2
    assert "FileError" in capsys.readouterr().err


def test_cli_stage_failure_exit_code(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["pipeline", "--input-dir", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 3


def test_cli_plot_needs_something(tmp_path):
    assert cli.main(["plot", "--out", str(tmp_path)]) == 2


def test_cli_gradcheck(capsys):
    assert cli.main(["gradcheck", "--models", "ffnn", "--tasks", "binary", "--dim", "6"]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_bad_arguments():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "x.csv", "--model", "rnn"])
    assert exc.value.code == 2


# -- figures --------------------------------------------------------------------------------


def test_plots(run, tmp_path):
    out = run.out_dir
    tpl = tmp_path / "tpl.csv"
    (tpl).write_text((out / "example_template.csv").read_text())
    assert cli.main(["plot", "--template", str(tpl), "--fs", "500", "--curves", str(out / "loss_curves.csv"),
                     "--scatter", str(out / "regression_scatter.csv"), "--out", str(tmp_path / "p")]) == 0
    deriv = (tmp_path / "p/derivatives.svg").read_text()
    assert deriv.count('class="panel"') == 5
    labels = re.findall(r'class="marker" data-label="(\w+)"', deriv)
    assert {"O", "S"} <= set(labels)
    for t in ("PPG", "VPG", "APG", "JPG", "SPG"):
        assert f">{t}<" in deriv
    curves = sorted(p.name for p in (tmp_path / "p").glob("curves_*.svg"))
    assert curves == sorted(f"curves_{t}_{m}.svg" for t, m in [
        ("binary", "logistic"), ("binary", "ffnn"), ("three_class", "logistic"),
        ("three_class", "ffnn"), ("regression", "linear"), ("regression", "ffnn")])
    c = (tmp_path / "p/curves_binary_ffnn.svg").read_text()
    assert 'data-label="train_loss"' in c and 'data-label="val_auc"' in c
    sc = (tmp_path / "p/regression_scatter.svg").read_text()
    assert 'data-label="y = x"' in sc and "MAE = " in sc
    assert sc.count('class="point"') == len(_rows(out / "regression_scatter.csv")) - 1

import csv
import datetime as dt
import json
import subprocess
import sys

import numpy as np
import pytest

from rainkit import cli
from rainkit.forecasts import ForecastSet, load_cdf_set, load_forecast_set
from rainkit.scoring import BIAS_LABELS

PUBLISHED_COUNTS = {
    "nwp": [43237, 9546, 24404, 32850, 39088, 76155],
    "unet": [47820, 18540, 17525, 79252, 19671, 42472],
}


def _ok(argv):
    code = cli.run([str(a) for a in argv])
    assert code == 0, argv
    return code


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One desk-scale run of the whole command chain, shared by the tests below."""
    root = tmp_path_factory.mktemp("pipe")
    _ok(["synth", "--out", root / "raw", "--t", 250, "--step-days", 2, "--nwp-members", 5, "--seed", 3])
    _ok(["features", "--manifest", root / "raw/manifest.json", "--out", root / "feat"])
    manifest = root / "feat/manifest.json"
    _ok(["train", "--manifest", manifest, "--out", root / "run", "--epochs", 3, "--batch-size", 32, "--base-width", 4, "--lr", 3e-3])
    ckpt = root / "run/model.ckpt"
    for split in ("train", "val", "test"):
        _ok(["predict", "--manifest", manifest, "--checkpoint", ckpt, "--split", split, "--out", root / f"unet_{split}"])
    _ok(["clim", "--manifest", manifest, "--split", "test", "--out", root / "clim"])
    _ok(["uq-fit", "--forecast", root / "unet_train", "--out", root / "idr.gidr"])
    _ok(["uq-predict", "--fit", root / "idr.gidr", "--forecast", root / "unet_test", "--out", root / "cdfs.json"])
    _ok(["score", "crps", "--forecast", root / "unet_test", "--cdfs", root / "cdfs.json", "--out", root / "score_unet"])
    _ok(["score", "crps", "--forecast", root / "clim", "--out", root / "score_clim"])
    return root, manifest


def test_pipeline_outputs(pipeline):
    root, _ = pipeline
    for rel in ("run/model.ckpt", "run/history.csv", "idr.gidr", "cdfs.json", "score_unet/crps.csv", "score_clim/crps.csv"):
        assert (root / rel).exists(), rel
    dates, grids = load_cdf_set(root / "cdfs.json")
    assert dates == load_forecast_set(root / "unet_test").dates
    assert len(grids[0]) == 16 and len(grids[0][0]) == 16


def test_splits_are_disjoint_and_chronological(pipeline):
    root, _ = pipeline
    train, val, test = (load_forecast_set(root / f"unet_{s}").dates for s in ("train", "val", "test"))
    assert (len(train), len(val), len(test)) == (175, 25, 50)
    assert max(train) < min(val) and max(val) < min(test)


def test_history_columns(pipeline):
    root, _ = pipeline
    with open(root / "run/history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert {"epoch", "train_l1", "val_l1", "lr"} <= set(rows[0])


def test_run_records(pipeline):
    root, _ = pipeline
    record = json.loads((root / "run/run_train.json").read_text())
    assert record["command"] == "train" and record["args"]["epochs"] == 3
    assert {"version", "python", "numpy"} <= set(record)
    assert (root / "score_unet/run_score_crps.json").exists()


def test_skill_against_itself_is_zero(pipeline, tmp_path, capsys):
    root, _ = pipeline
    clim = root / "score_clim/crps.csv"
    _ok(["score", "skill", "--model", clim, "--clim", clim, "--out", tmp_path])
    assert "skill mean=0.0000" in capsys.readouterr().out


def test_hybrid_chain(pipeline, tmp_path, capsys):
    root, manifest = pipeline
    _ok(["hybrid-fit", "--unet", root / "unet_val", "--manifest", manifest, "--out", tmp_path / "beta.json"])
    beta = json.loads((tmp_path / "beta.json").read_text())
    assert beta["split"] == "val" and beta["n"] == 25 * 16 * 16
    _ok(["hybrid-apply", "--unet", root / "unet_test", "--manifest", manifest, "--beta", tmp_path / "beta.json", "--out", tmp_path / "hyb"])
    hyb = load_forecast_set(tmp_path / "hyb")
    assert hyb.model == "HYB" and len(hyb.members) == 50 and hyb.members[0].shape == (5, 16, 16)
    assert hyb.predictions.min() >= 0
    _ok(["score", "crps", "--forecast", tmp_path / "hyb"])
    _ok(["score", "prf1", "--forecast", tmp_path / "hyb", "--tau", 10, "--out", tmp_path / "prf"])
    assert (tmp_path / "prf/prf1_10.json").exists()


def test_bias_and_chi2(pipeline, tmp_path, capsys):
    root, _ = pipeline
    _ok(["score", "bias", "--forecast", root / "unet_test", "--out", tmp_path / "unet.csv"])
    _ok(["score", "bias", "--forecast", root / "clim", "--out", tmp_path / "clim.csv"])
    capsys.readouterr()
    _ok(["score", "chi2", tmp_path / "unet.csv", tmp_path / "clim.csv"])
    assert capsys.readouterr().out.startswith("S=")


def test_importance_commands(pipeline, tmp_path):
    root, manifest = pipeline
    ckpt = root / "run/model.ckpt"
    _ok(["importance", "gibbs", "--manifest", manifest, "--checkpoint", ckpt, "--epochs", 20, "--burn-in", 10, "--out", tmp_path / "g"])
    means = json.loads((tmp_path / "g/posterior_means.json").read_text())["posterior_means"]
    assert list(means)[-2:] == ["COS", "SIN"]
    _ok(["importance", "sensitivity", "--manifest", manifest, "--checkpoint", ckpt, "--out", tmp_path / "s"])
    assert (tmp_path / "s/sensitivity.csv").exists()


def test_heatmap(pipeline, tmp_path):
    root, _ = pipeline
    _ok(["heatmap", "--csv", root / "score_unet/crps.csv", "--out", tmp_path / "m.pgm"])
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n16 16\n255\n")


def test_published_histograms(tmp_path, capsys):
    for name, counts in PUBLISHED_COUNTS.items():
        with open(tmp_path / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "count", "proportion"])
            for label, c in zip(BIAS_LABELS, counts):
                w.writerow([label, c, c / sum(counts)])
    _ok(["score", "chi2", tmp_path / "unet.csv", tmp_path / "nwp.csv", "--out", tmp_path / "chi2.json"])
    assert capsys.readouterr().out.startswith("S=39426.78 ")
    assert json.loads((tmp_path / "chi2.json").read_text())["dof"] == 5


def test_uq_predict_on_identity_data(tmp_path):
    dates = [dt.date(2001, 1, 1) + dt.timedelta(days=i) for i in range(6)]
    values = np.arange(6, dtype=np.float32).reshape(6, 1, 1) * np.ones((1, 2, 2), np.float32)
    ForecastSet("UNET", dates, values, values).save(tmp_path / "fs")
    _ok(["uq-fit", "--forecast", tmp_path / "fs", "--out", tmp_path / "fit.gidr"])
    _ok(["uq-predict", "--fit", tmp_path / "fit.gidr", "--forecast", tmp_path / "fs", "--out", tmp_path / "c.json"])
    _, grids = load_cdf_set(tmp_path / "c.json")
    for t in range(6):
        cdf = grids[t][1][0]
        np.testing.assert_allclose(cdf.atoms[cdf.cum > 0][0], t)
        assert cdf.cum[np.searchsorted(cdf.atoms, t)] == 1.0


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert cli.run(["frobnicate"]) == cli.EX_USAGE

    def test_missing_subcommand(self):
        assert cli.run([]) == cli.EX_USAGE

    def test_missing_required_flag(self):
        assert cli.run(["score", "mae"]) == cli.EX_USAGE
        assert cli.run(["score", "chi2", "only_one.csv"]) == cli.EX_USAGE

    def test_missing_file(self, tmp_path):
        assert cli.run(["features", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EX_IOERR

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        assert cli.run(["features", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == cli.EX_DATAERR

    def test_corrupt_grid(self, pipeline, tmp_path):
        _, manifest = pipeline
        (tmp_path / "bad.ckpt").write_bytes(b"GTCK garbage")
        assert cli.run(["predict", "--manifest", str(manifest), "--checkpoint", str(tmp_path / "bad.ckpt"), "--out", str(tmp_path / "o")]) == cli.EX_DATAERR

    def test_no_climatology_history(self, tmp_path):
        _ok(["synth", "--out", tmp_path / "d", "--t", 30, "--nwp-members", 0])
        assert cli.run(["clim", "--manifest", str(tmp_path / "d/manifest.json"), "--out", str(tmp_path / "c")]) == cli.EX_DATAERR


def test_data_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.DATA_ENV, str(tmp_path / "envdata"))
    _ok(["synth", "--t", 5, "--nwp-members", 0])
    assert (tmp_path / "envdata/manifest.json").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rainkit.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth" in proc.stdout

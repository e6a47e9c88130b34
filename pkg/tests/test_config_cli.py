import csv

import numpy as np
import pytest

from xrdenoise import cli, pipeline
from xrdenoise.config import ConfigError, RunConfig, parse_text
from xrdenoise.frames import DatasetManifest, read_frame
from xrdenoise.nn import checkpoint_meta, init_params, load_checkpoint, read_history
from xrdenoise.noise import derive_seed

SMALL = ["--set", "height=16", "--set", "width=16", "--set", "depth=2", "--set", "filters=2", "--set", "epochs=1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert run("synth", "--out", out, "--n-pairs", 20, *SMALL) == 0
    return out


# configuration -------------------------------------------------------------


def test_unknown_and_duplicate_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_text("seed = 1\nlearning_rate = 3\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"bogus": 1})
    (tmp_path / "c.txt").write_text("noise = speckle\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "c.txt")


def test_config_text_round_trip(tmp_path):
    cfg = RunConfig.from_mapping({"seed": "7", "exposure_scale": "1/10", "arch": "irunet", "depth": "10"})
    cfg.write(tmp_path / "c.txt")
    again = RunConfig.load(tmp_path / "c.txt")
    assert again.resolved() == cfg.resolved()
    assert again["exposure_scale"] == pytest.approx(0.1)


def test_auto_training_keys_follow_architecture():
    v = RunConfig.from_mapping({"arch": "vdsr"}).train_config()
    i = RunConfig.from_mapping({"arch": "irunet", "depth": "10"}).train_config()
    assert (v.batch_size, v.epochs, v.schedule_start) == (8, 250, 150)
    assert (i.batch_size, i.epochs, i.schedule_start) == (16, 300, 100)
    assert RunConfig.from_mapping({"lr0": "1e-3"}).train_config().lr0 == 1e-3


def test_split_fractions_validated():
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"split_train": "0.5"})


def test_scene_resize_keeps_rod_centred():
    scene = RunConfig.from_mapping({"height": "32", "width": "32"}).scene_spec()
    assert (scene.height, scene.width) == (32, 32)


# synth / noise -------------------------------------------------------------


def test_synth_writes_resolved_config_and_default_split(tmp_path, dataset):
    text = (dataset / "config.txt").read_text()
    assert "epochs = 1" in text and "lr0 = 0.0005" in text
    manifest = DatasetManifest.read_csv(dataset / "manifest.csv")
    assert manifest.counts() == {"train": 14, "val": 4, "test": 2}
    assert all(e.pair_id.endswith("_pois") for e in manifest.entries)
    assert read_frame(dataset / manifest.entries[0].lc_path).shape == (16, 16)


def test_synth_single_pair(tmp_path):
    out = tmp_path / "one"
    argv = ["synth", "--n-pairs", 1, *SMALL]
    assert run(*argv, "--out", tmp_path / "three") == 3  # one pair cannot fill a three-way split
    split = ["--set", "split_train=1", "--set", "split_val=0", "--set", "split_test=0"]
    assert run(*argv, *split, "--out", out) == 0
    assert len(read_csv(out / "manifest.csv")) == 1


def test_default_200_pair_split():
    cfg = RunConfig.from_mapping({"height": "8", "width": "8"})
    ds = pipeline.build_dataset(cfg)
    assert ds.manifest.counts() == {"train": 140, "val": 40, "test": 20}


def test_synth_with_blurred_noise(tmp_path):
    out = tmp_path / "pg"
    assert run("synth", "--out", out, "--n-pairs", 10, "--noise", "pois+g", *SMALL) == 0
    assert all(r["pair_id"].endswith("_pois+g") for r in read_csv(out / "manifest.csv"))
    assert read_csv(out / "calibration.csv")[0]["noise"] == "pois+g"


def test_noise_command_keeps_split(tmp_path, dataset):
    out = tmp_path / "gauss"
    assert run("noise", "--data", dataset, "--noise", "gauss", "--out", out, *SMALL) == 0
    before = {r["pair_id"].split("_")[0]: r["split"] for r in read_csv(dataset / "manifest.csv")}
    after = read_csv(out / "manifest.csv")
    assert all(r["pair_id"].endswith("_gauss") for r in after)
    assert {r["pair_id"].split("_")[0]: r["split"] for r in after} == before


def test_out_dir_must_be_fresh(tmp_path, dataset):
    assert run("synth", "--out", dataset, "--n-pairs", 2) == 2


# train / denoise / eval ------------------------------------------------------


def test_train_with_zero_lr_equals_init(tmp_path, dataset):
    out = tmp_path / "t0"
    assert run("train", "--data", dataset, "--out", out, *SMALL, "--set", "lr0=0", "--seed", 3) == 0
    spec, params = load_checkpoint(out / "checkpoint.dnet")
    init = init_params(spec, derive_seed(3, 0), np.float32)
    assert all(np.array_equal(a, b) for a, b in zip(params, init))
    assert len(read_history(out / "history.csv")) == 1
    assert checkpoint_meta(out / "checkpoint.dnet")["noise"] == "pois"
    assert (out / "final.dnet").exists() and (out / "config.txt").exists()


def test_arch_flag_sets_architecture_defaults(tmp_path, dataset):
    out = tmp_path / "ir"
    assert run("train", "--data", dataset, "--out", out, "--arch", "irunet", *SMALL, "--set", "depth=5", "--set", "stages=2") == 0
    text = (out / "config.txt").read_text()
    assert "arch = irunet" in text and "batch_size = 16" in text
    assert load_checkpoint(out / "checkpoint.dnet")[0].topology == "irunet"


@pytest.fixture(scope="module")
def model(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("model") / "m"
    assert run("train", "--data", dataset, "--out", out, *SMALL) == 0
    return out / "checkpoint.dnet"


def test_eval_rows_match_split(tmp_path, dataset, model):
    out = tmp_path / "ev"
    assert run("eval", "--checkpoint", model, "--data", dataset, "--out", out) == 0
    assert len(read_csv(out / "metrics.csv")) == 2
    summary = read_csv(out / "summary.csv")
    assert summary[0]["row"] == "Poisson → Poisson"
    assert len(list((out / "heatmaps").glob("*_delta.dfrm"))) == 2
    assert (out / "psnr_hist.csv").exists()


def test_eval_hc_against_itself(tmp_path, dataset):
    out = tmp_path / "hc"
    assert run("eval", "--data", dataset, "--input", "hc", "--split", "val", "--out", out) == 0
    rows = read_csv(out / "metrics.csv")
    assert len(rows) == 4
    assert all(float(r["psnr_db"]) == 200.0 and float(r["mssim"]) == pytest.approx(1.0) for r in rows)


def test_eval_label_matrix(tmp_path, dataset, model):
    exp = tmp_path / "exp"
    assert run("noise", "--data", dataset, "--noise", "exp", "--out", exp, *SMALL) == 0
    out = tmp_path / "matrix"
    assert run("eval", "--checkpoint", model, "--data", dataset, "--checkpoint", model, "--data", exp, "--out", out) == 0
    labels = [r["row"] for r in read_csv(out / "summary.csv")]
    assert labels == ["Poisson → Poisson", "Poisson → Exp."]
    assert (out / "metrics_0.csv").exists() and (out / "metrics_1.csv").exists()


def test_eval_mismatched_lists(tmp_path, dataset, model):
    assert run("eval", "--checkpoint", model, "--checkpoint", model, "--data", dataset, "--out", tmp_path / "x") == 2


def test_denoise_command(tmp_path, dataset, model):
    frame = next((dataset / "frames").glob("*_lc.dfrm"))
    out = tmp_path / "dn"
    assert run("denoise", "--checkpoint", model, "--out", out, frame) == 0
    do = read_frame(out / f"{frame.stem}_do.dfrm")
    assert do.shape == read_frame(frame).shape


# report / exit codes ---------------------------------------------------------


def test_report_plots_history(tmp_path, model):
    out = tmp_path / "rep"
    assert run("report", "--run", model.parent, "--out", out) == 0
    assert list(out.glob("loss_*.svg"))


def test_report_nothing_to_plot(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "history.csv").write_text("epoch,lr,train_loss,val_loss\n")
    assert run("report", "--run", empty, "--out", tmp_path / "r") == 3


def test_exit_codes(tmp_path, capsys):
    assert run("synth", "--set", "nope=1", "--out", tmp_path / "a") == 2
    assert "unknown key" in capsys.readouterr().err
    assert run("eval", "--data", tmp_path / "missing", "--out", tmp_path / "b") == 3
    bad = tmp_path / "bad.dnet"
    bad.write_bytes(b"junk")
    assert run("denoise", "--checkpoint", bad, "--out", tmp_path / "c", bad) == 3

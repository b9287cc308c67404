"""Command-line surface: subcommands, outputs, exit codes, determinism."""

import csv
import json

import numpy as np
import pytest

from lfsamba.backbone import init_model, named_params
from lfsamba.cli import main
from lfsamba.config import RunConfig
from lfsamba.data import load_checkpoint, synth_dataset
from lfsamba.errors import ConfigError


TINY = dict(image_size=16, patch_size=4, channels=8, state_size=2,
            adapter_groups=1, adapter_ratio=4, encoder_blocks=1, mlp_ratio=2,
            decoder_stages=2, lr=1e-3, steps=2, seed=0)


def write_config(path, **overrides):
    cfg = dict(TINY)
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture()
def dataset(tmp_path):
    root = tmp_path / "ds"
    synth_dataset(root, n=2, seed=5, size=16, k_slices=2)
    return root


# -- synth / scribble ---------------------------------------------------------------


def test_synth_command(tmp_path, capsys):
    out = tmp_path / "ds"
    code = main(["synth", "--seed", "3", "--n", "2", "--out", str(out),
                 "--k", "2", "--image-size", "16"])
    assert code == 0
    assert (out / "sample_0000" / "allfocus.png").exists()
    assert (out / "sample_0001" / "slice_01.png").exists()
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 2
    assert "wrote 2 samples" in capsys.readouterr().out


def test_scribble_command(dataset, capsys):
    code = main(["scribble", "--dataset", str(dataset)])
    assert code == 0
    assert (dataset / "sample_0000" / "scribble.png").exists()
    assert (dataset / "sample_0001" / "scribble.png").exists()


# -- train ----------------------------------------------------------------------


def test_train_zero_steps_checkpoint_equals_init(tmp_path, dataset):
    cfg_path = write_config(tmp_path / "cfg.json", steps=0,
                            dataset=str(dataset))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    cfg = RunConfig.from_file(cfg_path)
    loaded, step, seed = load_checkpoint(out / "checkpoint.lfsb", cfg)
    assert step == 0 and seed == cfg.seed
    fresh = init_model(cfg)
    for name, t in named_params(fresh).items():
        stored = named_params(loaded)[name].data
        assert np.array_equal(stored, t.data.astype(np.float32)), name


def test_train_deterministic_across_runs(tmp_path, dataset):
    cfg_path = write_config(tmp_path / "cfg.json", dataset=str(dataset))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert main(["train", "--config", str(cfg_path), "--out", str(out2)]) == 0
    assert (out1 / "checkpoint.lfsb").read_bytes() == (out2 / "checkpoint.lfsb").read_bytes()

    def losses(path):
        with open(path / "train_log.csv", newline="") as fh:
            return [(row["step"], row["loss"]) for row in csv.DictReader(fh)]

    assert losses(out1) == losses(out2)
    assert (out1 / "loss_curve.png").exists()


def test_train_checkpoint_interval(tmp_path, dataset):
    cfg_path = write_config(tmp_path / "cfg.json", steps=4,
                            checkpoint_interval=2, dataset=str(dataset))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "checkpoint_000002.lfsb").exists()
    assert (out / "checkpoint_000004.lfsb").exists()
    assert (out / "checkpoint.lfsb").exists()


def test_train_weak_without_scribbles_exit_1(tmp_path, dataset, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", mode="weak",
                            dataset=str(dataset))
    code = main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "scribble" in capsys.readouterr().err


def test_train_missing_dataset_exit_2(tmp_path):
    cfg_path = write_config(tmp_path / "cfg.json", dataset=str(tmp_path / "nope"))
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2


def test_bad_config_exit_1(tmp_path, dataset, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg = dict(TINY)
    cfg["mystery_knob"] = 3
    cfg_path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**TINY, "mode": "dense"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**TINY, "lr": -1.0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**TINY, "channels": 0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**TINY, "steps": -1})


# -- eval -----------------------------------------------------------------------


def trained_checkpoint(tmp_path, dataset, **overrides):
    cfg_path = write_config(tmp_path / "cfg.json", dataset=str(dataset), **overrides)
    out = tmp_path / "train_out"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    return cfg_path, out / "checkpoint.lfsb"


def test_eval_outputs(tmp_path, dataset, capsys):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    out = tmp_path / "eval_out"
    code = main(["eval", "--config", str(cfg_path), "--ckpt", str(ckpt),
                 "--dataset", str(dataset), "--out", str(out)])
    assert code == 0
    assert "mean-mae" in capsys.readouterr().out
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row in rows:
        assert 0.0 <= float(row["mae"]) <= 1.0
    with open(out / "pr_curve.csv", newline="") as fh:
        pr_rows = list(csv.DictReader(fh))
    assert len(pr_rows) == 256
    assert (out / "pr_curve.png").exists()
    assert (out / "metrics.png").exists()


def test_eval_empty_dataset_zero_exit(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    empty = tmp_path / "empty_ds"
    empty.mkdir()
    out = tmp_path / "eval_empty"
    code = main(["eval", "--config", str(cfg_path), "--ckpt", str(ckpt),
                 "--dataset", str(empty), "--out", str(out)])
    assert code == 0
    assert (out / "metrics.csv").read_text().strip() == "id,mae,f_beta"


def test_eval_geometry_mismatch_exit_1(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    other_cfg = write_config(tmp_path / "other.json", channels=16,
                             dataset=str(dataset))
    code = main(["eval", "--config", str(other_cfg), "--ckpt", str(ckpt),
                 "--dataset", str(dataset), "--out", str(tmp_path / "x")])
    assert code == 1


# -- infer ----------------------------------------------------------------------


def test_infer_outputs_and_determinism(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    out1, out2 = tmp_path / "i1", tmp_path / "i2"
    sample = dataset / "sample_0000"
    assert main(["infer", "--ckpt", str(ckpt), "--sample", str(sample),
                 "--out", str(out1)]) == 0
    assert main(["infer", "--ckpt", str(ckpt), "--sample", str(sample),
                 "--out", str(out2)]) == 0
    from PIL import Image

    img = Image.open(out1 / "saliency.png")
    assert img.size == (16, 16)
    assert (out1 / "saliency.png").read_bytes() == (out2 / "saliency.png").read_bytes()
    assert not (out1 / "f0.png").exists()


def test_infer_dump_features(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    out = tmp_path / "dump"
    assert main(["infer", "--ckpt", str(ckpt), "--sample",
                 str(dataset / "sample_0001"), "--out", str(out),
                 "--dump-features"]) == 0
    feature_pngs = sorted(p.name for p in out.glob("*.png"))
    assert feature_pngs == ["f0.png", "ffused.png", "fslices.png", "saliency.png"]


def test_infer_missing_sample_exit_2(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    assert main(["infer", "--ckpt", str(ckpt), "--sample",
                 str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2


def test_infer_without_config_derives_geometry(tmp_path, dataset):
    cfg_path, ckpt = trained_checkpoint(tmp_path, dataset)
    out = tmp_path / "no_cfg"
    assert main(["infer", "--ckpt", str(ckpt), "--sample",
                 str(dataset / "sample_0000"), "--out", str(out)]) == 0
    assert (out / "saliency.png").exists()


# -- bench ----------------------------------------------------------------------


def test_bench_outputs(tmp_path, dataset, capsys):
    cfg_path = write_config(tmp_path / "cfg.json")
    out = tmp_path / "bench_out"
    code = main(["bench", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    assert "variant" in capsys.readouterr().out
    with open(out / "cost_report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == ["mamba", "concat"]
    assert int(rows[1]["params"]) < int(rows[0]["params"])
    assert float(rows[0]["forward_ms_mean"]) > 0
    assert (out / "cost_report.png").exists()

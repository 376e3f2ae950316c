import json

import numpy as np
import pytest

from trajflow import tensor_io
from trajflow.cli import main

TINY = {
    "seed": 0,
    "data": {"n_train_scenes": 4, "n_eval_scenes": 2},
    "rae": {"iters": 40, "hidden": [16, 8], "latent_dim": 4},
    "lfm": {"iters": 30, "batch_size": 4, "width": 16},
    "sampler": {"rtol": 1e-3, "atol": 1e-5},
    "eval": {"t_grid_points": 3},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One tiny end-to-end CLI run shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data")]) == 0
    assert (
        main(
            [
                "train-rae",
                "--config", str(cfg),
                "--data", str(root / "data"),
                "--out", str(root / "rae"),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "train-lfm",
                "--config", str(cfg),
                "--data", str(root / "data"),
                "--rae", str(root / "rae"),
                "--out", str(root / "lfm"),
            ]
        )
        == 0
    )
    return root, cfg


def test_gen_data_outputs(workdir):
    root, _ = workdir
    manifest = json.loads((root / "data" / "manifest.json").read_text())
    assert len(manifest["scenes"]) == 6


def test_checkpoints_written(workdir):
    root, _ = workdir
    assert (root / "rae" / "manifest.json").exists()
    assert (root / "rae" / "loss.csv").exists()
    assert (root / "lfm" / "manifest.json").exists()
    assert json.loads((root / "lfm" / "levels.json").read_text()) == {
        "train_scales": [1.0, 2.0, 4.0]
    }


def test_sample_by_scale_and_time(workdir, tmp_path, capsys):
    root, _ = workdir
    inp = root / "data" / "scene_0004" / "s_1.dgft"
    out = tmp_path / "out.dgft"
    rc = main(
        [
            "sample",
            "--rae", str(root / "rae"),
            "--lfm", str(root / "lfm"),
            "--input", str(inp),
            "--scale", "3",
            "--out", str(out),
        ]
    )
    assert rc == 0
    printed = capsys.readouterr().out
    assert "t=0.666667" in printed and "nfe=" in printed
    img = tensor_io.read(out)
    assert img.shape == (16, 16)
    log = (tmp_path / "nfe_log.csv").read_text().splitlines()
    assert log[0] == "input,t,nfe"
    # --t overrides the scale map
    rc = main(
        [
            "sample",
            "--rae", str(root / "rae"),
            "--lfm", str(root / "lfm"),
            "--input", str(inp),
            "--t", "0",
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert "t=0 nfe=0" in capsys.readouterr().out


def test_sample_requires_scale_or_time(workdir, tmp_path, capsys):
    root, _ = workdir
    rc = main(
        [
            "sample",
            "--rae", str(root / "rae"),
            "--lfm", str(root / "lfm"),
            "--input", "x.dgft",
            "--out", str(tmp_path / "o.dgft"),
        ]
    )
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_eval_outputs(workdir, tmp_path):
    root, cfg = workdir
    out = tmp_path / "eval"
    rc = main(
        [
            "eval",
            "--rae", str(root / "rae"),
            "--lfm", str(root / "lfm"),
            "--data", str(root / "data"),
            "--out", str(out),
            "--config", str(cfg),
            "--t-grid-points", "3",
        ]
    )
    assert rc == 0
    for name in ("eval.csv", "summary.csv", "argmax.csv", "timing.csv"):
        assert (out / name).exists()
    lines = (out / "eval.csv").read_text().splitlines()
    assert lines[0] == "scene_id,t,holdout_scale,psnr,nfe"
    assert len(lines) == 1 + 2 * 3  # 2 eval scenes x 3 grid times


def test_missing_config_file_is_config_error(capsys):
    assert main(["gen-data", "--config", "/nonexistent.json", "--out", "/tmp/x"]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_config_key_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"seed": 0, "nope": {}}')
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2


def test_runtime_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    rc = main(
        [
            "train-rae",
            "--config", str(cfg),
            "--data", str(tmp_path / "missing"),
            "--out", str(tmp_path / "rae"),
        ]
    )
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        main(["frobnicate"])

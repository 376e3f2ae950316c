import numpy as np
import pytest

from trajflow.pipeline import (
    ABLATION_ARMS,
    ConfigError,
    DEFAULT_CONFIG,
    _apply_arm,
    summarize_sweep,
    validate_config,
    write_csv,
)


def test_validate_config_requires_seed():
    with pytest.raises(ConfigError, match="seed"):
        validate_config({})
    with pytest.raises(ConfigError, match="JSON object"):
        validate_config([])


def test_validate_config_merges_defaults():
    cfg = validate_config({"seed": 3, "lfm": {"iters": 10}})
    assert cfg["seed"] == 3
    assert cfg["lfm"]["iters"] == 10
    assert cfg["lfm"]["lam"] == DEFAULT_CONFIG["lfm"]["lam"]
    assert cfg["data"] == DEFAULT_CONFIG["data"]


def test_validate_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config key 'foo'"):
        validate_config({"seed": 0, "foo": {}})
    with pytest.raises(ConfigError, match="'lfm.bar'"):
        validate_config({"seed": 0, "lfm": {"bar": 1}})


def test_validate_config_does_not_mutate_defaults():
    validate_config({"seed": 0, "data": {"kappa": 9.0}})
    assert DEFAULT_CONFIG["data"]["kappa"] == 0.6


def test_write_csv_roundtrip_floats(tmp_path):
    rows = [(1, 0.1 + 0.2), (2, 1e-17)]
    path = tmp_path / "x.csv"
    write_csv(path, ["i", "v"], rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,v"
    # repr round-trips float64 exactly
    assert float(lines[1].split(",")[1]) == 0.1 + 0.2
    assert float(lines[2].split(",")[1]) == 1e-17


def test_summarize_sweep():
    rows = [
        (0, 0.0, "3", 10.0, 5),
        (1, 0.0, "3", 20.0, 5),
        (0, 0.5, "3", 30.0, 9),
        (1, 0.5, "3", 28.0, 9),
    ]
    summary, argmax = summarize_sweep(rows, [3.0])
    assert summary == [("3", 0.0, 15.0), ("3", 0.5, 29.0)]
    assert argmax["3"] == (0.5, 29.0)


def test_apply_arm_known_arms():
    base = validate_config({"seed": 0})
    linear = _apply_arm(base, ABLATION_ARMS["linear_trajectory"])
    assert linear["lfm"]["linear_trajectory"] is True
    no_perc = _apply_arm(base, ABLATION_ARMS["no_perceptual"])
    assert no_perc["lfm"]["perceptual"] is None
    no_skips = _apply_arm(base, ABLATION_ARMS["no_skips"])
    assert no_skips["rae"]["skips"] is False
    # the base config is untouched
    assert base["rae"]["skips"] is True


def test_apply_arm_rejects_invalid():
    base = validate_config({"seed": 0})
    with pytest.raises(ConfigError):
        _apply_arm(base, {"trajectory": "quadratic"})
    with pytest.raises(ConfigError):
        _apply_arm(base, {"unknown_key": "x"})

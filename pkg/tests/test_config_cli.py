import json
from pathlib import Path

import numpy as np
import pytest

from rhythmdance import config as config_mod
from rhythmdance.cli import EXIT_CONFIG, EXIT_RUNTIME, EXIT_USAGE, run
from rhythmdance.config import ConfigError, ExperimentConfig
from rhythmdance.data import read_tensor
from rhythmdance.metrics import CSV_HEADER

from .pipeline import TINY, fixture_copy, run_pipeline, tree_bytes, write_config

FIXTURE = Path(__file__).parent / "fixtures" / "eval"


# config -----------------------------------------------------------------------
def test_defaults_round_trip_through_json(tmp_path):
    cfg = ExperimentConfig()
    path = tmp_path / "c.json"
    path.write_text(cfg.dumps())
    again = config_mod.load(path)
    assert again.to_dict() == {**cfg.to_dict(), "workdir": str(tmp_path / "run")}


def test_shipped_toy_config_loads():
    cfg = config_mod.load(Path(__file__).parents[1] / "configs" / "toy.json")
    assert cfg.model_config().k_cb == 64 and cfg.train.steps == 500


def test_overrides():
    raw = config_mod.apply_overrides({"train": {"steps": 5}}, ["train.steps=7", "model.gate_position=pre",
                                                               "model.use_rhythm=false"])
    cfg = config_mod.from_dict(raw)
    assert cfg.train.steps == 7 and cfg.model.gate_position == "pre" and cfg.model.use_rhythm is False
    with pytest.raises(ConfigError):
        config_mod.apply_overrides({}, ["novalue"])


@pytest.mark.parametrize("raw, field", [
    ({"model": {"d": 30}}, "model.d"),
    ({"model": {"bogus": 1}}, "model.bogus"),
    ({"nonsense": 1}, "nonsense"),
    ({"train": {"steps": "many"}}, "train.steps"),
    ({"train": {"optimizer": "rmsprop"}}, "train.optimizer"),
    ({"synth": {"T": 190}}, "synth.T"),
    ({"generate": {"n_pieces": 50}}, "generate.n_pieces"),
    ({"stft": {"fft_len": 7}}, "stft"),
    ({"model": {"use_rhythm": 1}}, "model.use_rhythm"),
])
def test_invalid_configs_name_the_field(raw, field):
    with pytest.raises(ConfigError) as err:
        config_mod.from_dict(raw)
    assert err.value.field == field


# cli ------------------------------------------------------------------------------
def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "usage" in capsys.readouterr().out
    assert run(["evaluate", "--help"]) == 0


def test_unknown_subcommand(capsys):
    code = run(["frobnicate"])
    assert code == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    assert run(["evaluate", "--config", "x.json", "--nope"]) == EXIT_USAGE


def test_evaluate_on_fixture(tmp_path, capsys):
    cfg = fixture_copy(FIXTURE, tmp_path / "eval")
    assert run(["evaluate", "--config", str(cfg), "--per-sequence", str(tmp_path / "rows.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == CSV_HEADER
    values = [float(v) for v in lines[1].split(",")]
    assert len(values) == 5 and all(np.isfinite(values))
    assert (tmp_path / "eval" / "metrics.csv").read_text().splitlines()[1] == lines[1]
    assert len((tmp_path / "rows.csv").read_text().splitlines()) == 5


def test_config_error_exit(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": {"d": 30}})
    assert run(["gen-data", "--config", str(cfg)]) == EXIT_CONFIG
    assert "model.d" in capsys.readouterr().err
    assert run(["gen-data", "--config", str(cfg), "--set", "model.d=32", "--set", "train.lr=-1"]) == EXIT_CONFIG
    assert "train.lr" in capsys.readouterr().err
    assert run(["gen-data", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{")
    assert run(["gen-data", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG


def test_malformed_tensor_exit(tmp_path, capsys):
    cfg = fixture_copy(FIXTURE, tmp_path / "eval")
    target = tmp_path / "eval" / "generated" / "motion_0000.dbt"
    target.write_bytes(b"DBT0" + target.read_bytes()[4:])
    assert run(["evaluate", "--config", str(cfg)]) == EXIT_RUNTIME
    assert "magic" in capsys.readouterr().err


def test_missing_stage_output_exit(tmp_path):
    cfg = write_config(tmp_path, TINY)
    assert run(["--log-level", "ERROR", "train-model", "--config", str(cfg)]) == EXIT_RUNTIME


def test_pipeline_is_deterministic(tmp_path):
    a = run_pipeline(tmp_path / "a")
    b = run_pipeline(tmp_path / "b")
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta.keys() == tb.keys()
    assert {"metrics.csv", "loss_curve.dbt", "generated/codes.dbt"} <= ta.keys()
    assert ta == tb
    codes = read_tensor(a / "generated" / "codes.dbt")
    assert codes.shape == (3, 2, 12)


def test_inspect_writes_heatmap(tmp_path, capsys):
    work = run_pipeline(tmp_path)
    cfg = str(tmp_path / "config.json")
    assert run(["--log-level", "ERROR", "inspect", "--config", cfg, "--index", "1", "--block", "1"]) == 0
    heat = read_tensor(work / "inspect" / "heatmap.dbt")
    assert heat.shape == (33, 33)
    np.testing.assert_allclose(heat.sum(axis=1), 1.0, atol=1e-5)
    assert run(["--log-level", "ERROR", "inspect", "--config", cfg, "--index", "9"]) == EXIT_USAGE
    assert run(["--log-level", "ERROR", "inspect", "--config", cfg, "--block", "5"]) == EXIT_USAGE


def test_set_changes_the_run(tmp_path):
    cfg = write_config(tmp_path, TINY)
    assert run(["--log-level", "ERROR", "gen-data", "--config", str(cfg), "--set", "synth.n_sequences=4"]) == 0
    assert len(list((tmp_path / "run" / "data" / "train").glob("motion_*.dbt"))) == 4
    resolved = json.loads(config_mod.load(cfg, ["seed=3"]).dumps())
    assert resolved["seed"] == 3

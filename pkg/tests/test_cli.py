from pathlib import Path

import pytest

from heterosag.cli import main
from heterosag.config import apply_overrides, load_config, scenario_configs
from heterosag.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", ["quadratic", "byzantine", "comm_time", "subgroups"])
def test_shipped_configs_load(name):
    loaded = load_config(str(CONFIGS / f"{name}.toml"))
    assert loaded.round.plan().N == loaded.round.N


def test_overrides_parse_toml_values():
    data = apply_overrides({"training": {"rounds": 5}}, ["training.rounds=7", "quantizers.levels=[2,2]",
                                                         "seed=3", "training.aggregator=median"])
    assert data["training"]["rounds"] == 7
    assert data["quantizers"]["levels"] == [2, 2]
    assert data["seed"] == 3
    assert data["training"]["aggregator"] == "median"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["nonsense"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["a.b.c=1"])


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[training]\nrunds = 3\n")
    with pytest.raises(ConfigError, match="runds"):
        load_config(str(p))
    p.write_text("[trainin]\nrounds = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))


def test_scenarios_expand():
    loaded = load_config(str(CONFIGS / "comm_time.toml"))
    names = [c.name for c in scenario_configs(loaded)]
    assert names == ["heterogeneous", "homogeneous_K2", "no_quantization"]


def test_plan_and_verify_commands(capsys):
    assert main(["plan", "--groups", "5"]) == 0
    out = capsys.readouterr().out
    assert "delta (exhaustive) = 4/5" in out
    assert main(["verify", "--subgroups", "1,2,2"]) == 0
    assert "pairing: ok" in capsys.readouterr().out
    assert main(["plan", "--groups", "3", "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "level,0,1,2"


def test_simulate_writes_csv(tmp_path):
    out = tmp_path / "run.csv"
    code = main(["simulate", "--config", str(CONFIGS / "quadratic.toml"), "--seed", "1",
                 "--set", "training.rounds=5", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("round,loss,optimality_gap")
    assert len(lines) == 6


def test_exit_codes(capsys):
    assert main(["plan"]) == 1
    assert main(["simulate", "--seed", "0", "--set", "quantizers.levels=[2,2]"]) == 1
    # every user drops with certainty, so no round can be decoded
    assert main(["simulate", "--seed", "0", "--set", "dropout.p=1.0", "--set", "training.rounds=2"]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "protocol failure" in err


def test_compare_without_training(capsys):
    assert main(["compare", "--config", str(CONFIGS / "comm_time.toml"), "--no-train"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and lines[1].startswith("heterogeneous")

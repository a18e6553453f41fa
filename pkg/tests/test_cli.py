from pathlib import Path

import pytest

from knowsr.cli import EXIT_CONFIG, EXIT_OK, main
from knowsr.config import load_config, parse_config
from knowsr.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMOKE = CONFIGS / "smoke.toml"


def test_shipped_configs_parse():
    desk = load_config(CONFIGS / "desk.toml")
    assert [v.name for v in desk.variants] == ["MADDPG", "7-3KnowSR"]
    assert desk.episodes == 1500 and desk.seeds == [0, 1, 2, 3, 4]
    assert desk.variants[1].schedule.share_start_episode == 150
    grid = load_config(CONFIGS / "grid8.toml")
    assert len(grid.variants) == 8 and grid.env.obs_dim == 4 + 16 + 14


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config({"train": {"lr": 0.1}})
    with pytest.raises(ConfigError):
        parse_config({"extras": {}})
    with pytest.raises(ConfigError):
        parse_config({"campaign": {"variants": [{"share_ratio": 3}]}})


def test_train_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["train", "--config", str(SMOKE), "--seed", "3", "--out", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "a" / "MADDPG__seed3.csv").read_bytes()
    assert a == (tmp_path / "b" / "MADDPG__seed3.csv").read_bytes()
    assert len(a.decode().splitlines()) == 13
    assert "MADDPG seed 3" in capsys.readouterr().out


def test_campaign_and_report(tmp_path, capsys):
    out = tmp_path / "camp"
    assert main(["campaign", "--config", str(SMOKE), "--out", str(out), "--workers", "1"]) == EXIT_OK
    assert "2-1KnowSR" in capsys.readouterr().out
    assert main(["report", "--in", str(out), "--table", "--plots"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "baseline" in text
    assert (out / "plots" / "MADDPG.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\ngamma = 1.5\n")
    assert main(["train", "--config", str(bad), "--seed", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.toml"), "--seed", "0",
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text("[train\n")
    assert main(["campaign", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_report_without_metrics(tmp_path):
    assert main(["report", "--in", str(tmp_path), "--table"]) == EXIT_CONFIG


def test_verify(capsys):
    assert main(["verify", "--nets", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 9 and "kernel backend" in out

"""Tests for configuration."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from s3m.config import ConfigError, RunConfig, load_config


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert (config.train_days, config.val_days, config.test_days) == (4200, 140, 700)
        assert config.lr == 1e-4
        assert config.epochs == 10
        assert config.negatives_k == 4
        assert config.candidate_pool == 50
        assert config.ks == (1, 5, 10)
        assert config.aggregation == "max"
        assert config.include_test_history is True

    def test_views(self):
        config = RunConfig(trim_level=2, max_len=30, hidden_dim=7, seed=5)
        assert config.preprocessing().trim_level == 2
        assert config.train_config().max_len == 30
        assert config.model_config(vocab_size=10).hidden_dim == 7
        assert config.model_config(vocab_size=10).seed == 5
        assert config.eval_config().ks == (1, 5, 10)

    @pytest.mark.parametrize(
        "field, value",
        [
            ("trim_level", 5),
            ("lr", 0.0),
            ("epochs", 0),
            ("train_days", 0),
            ("aggregation", "median"),
            ("workers", 0),
            ("ks", (0, 5)),
        ],
    )
    def test_invalid_values(self, field: str, value):
        with pytest.raises(ConfigError):
            RunConfig(**{field: value})

    def test_to_json(self, tmp_path: Path):
        config = RunConfig(log_path=tmp_path / "run.log")
        data = json.loads(config.to_json())
        assert data["log_path"] == str(tmp_path / "run.log")
        assert data["ks"] == [1, 5, 10]


class TestLoadConfig:
    def test_env_file_seed(self, tmp_path: Path):
        env_file = tmp_path / "custom.env"
        env_file.write_text("S3M_SEED=42\n")
        assert load_config(env_path=env_file).seed == 42

    def test_bad_env_seed(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("S3M_SEED", "abc")
        with pytest.raises(ConfigError, match="S3M_SEED"):
            load_config()

    def test_config_file_with_flag_spellings(self, tmp_path: Path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"train-days": 7, "trim": 1, "negatives": 3, "ks": [1, 3]}))
        config = load_config(config_path=cfg)
        assert config.train_days == 7
        assert config.trim_level == 1
        assert config.negatives_k == 3
        assert config.ks == (1, 3)

    def test_flags_win_over_file_and_env(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("S3M_SEED", "9")
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 3, "epochs": 4}))
        config = load_config(config_path=cfg, overrides={"seed": 11, "epochs": None})
        assert config.seed == 11
        assert config.epochs == 4

    def test_file_wins_over_env(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("S3M_SEED", "9")
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 3}))
        assert load_config(config_path=cfg).seed == 3

    def test_unknown_key(self, tmp_path: Path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"learning_rate": 0.1}))
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config(config_path=cfg)

    def test_not_json(self, tmp_path: Path):
        cfg = tmp_path / "run.json"
        cfg.write_text("{oops")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(config_path=cfg)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config(config_path=tmp_path / "absent.json")

    def test_log_file_from_env(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
        monkeypatch.setenv("S3M_LOG_FILE", str(tmp_path / "x.log"))
        assert load_config().log_path == tmp_path / "x.log"

"""Run configuration: .env defaults, an optional JSON file, then command-line flags."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import load_dotenv

from s3m.model.network import ModelConfig
from s3m.retrieval.evaluate import EvalConfig
from s3m.retrieval.ranking import AGGREGATIONS
from s3m.traces.preprocess import DEFAULT_MAX_LEN, TRIM_LEVELS, Preprocessing
from s3m.training.trainer import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown config keys or invalid values."""


def _xdg_config_home() -> Path:
    return Path(os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config"))


# flag spellings that differ from the field name
_ALIASES = {
    "trim": "trim_level",
    "negatives": "negatives_k",
    "log_file": "log_path",
    "test_history": "include_test_history",
}


@dataclass
class RunConfig:
    # Time split, in days
    train_days: int = 4200
    val_days: int = 140
    test_days: int = 700
    start: Optional[str] = None  # YYYY-MM-DD, defaults to the earliest report

    # Preprocessing
    trim_level: int = 0
    max_len: int = DEFAULT_MAX_LEN
    collapse_recursion: bool = False

    # Model
    embed_dim: int = 50
    hidden_dim: int = 100
    classifier_hidden: int = 200

    # Training
    lr: float = 1e-4
    epochs: int = 10
    seed: int = 0
    negatives_k: int = 4
    candidate_pool: int = 50
    clip_norm: Optional[float] = None

    # Evaluation
    ks: tuple[int, ...] = (1, 5, 10)
    aggregation: str = "max"
    include_test_history: bool = True
    workers: int = 1

    log_path: Optional[Path] = None

    def __post_init__(self) -> None:
        self.ks = tuple(int(k) for k in self.ks)
        if self.log_path is not None:
            self.log_path = Path(self.log_path)
        checks = [
            (self.trim_level in TRIM_LEVELS, f"trim_level must be one of {TRIM_LEVELS}"),
            (self.train_days > 0, "train_days must be > 0"),
            (self.val_days >= 0, "val_days must be >= 0"),
            (self.test_days > 0, "test_days must be > 0"),
            (self.max_len >= 1, "max_len must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.negatives_k >= 1, "negatives_k must be >= 1"),
            (self.candidate_pool >= 1, "candidate_pool must be >= 1"),
            (self.clip_norm is None or self.clip_norm > 0, "clip_norm must be > 0"),
            (bool(self.ks) and min(self.ks) >= 1, "ks must be positive integers"),
            (self.aggregation in AGGREGATIONS, f"aggregation must be one of {AGGREGATIONS}"),
            (self.workers >= 1, "workers must be >= 1"),
            (min(self.embed_dim, self.hidden_dim, self.classifier_hidden) >= 1,
             "model dimensions must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    # ── Views ──────────────────────────────────────────

    def preprocessing(self) -> Preprocessing:
        return Preprocessing(self.trim_level, self.max_len, self.collapse_recursion)

    def train_config(self, show_progress: bool = False) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            trim_level=self.trim_level,
            max_len=self.max_len,
            negatives_k=self.negatives_k,
            candidate_pool=self.candidate_pool,
            collapse_recursion=self.collapse_recursion,
            clip_norm=self.clip_norm,
            show_progress=show_progress,
        )

    def eval_config(self, show_progress: bool = False) -> EvalConfig:
        return EvalConfig(
            ks=self.ks,
            aggregation=self.aggregation,
            include_test_history=self.include_test_history,
            workers=self.workers,
            show_progress=show_progress,
        )

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            classifier_hidden=self.classifier_hidden,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["ks"] = list(self.ks)
        data["log_path"] = str(self.log_path) if self.log_path else None
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _normalize(values: Mapping[str, Any], source: str) -> dict[str, Any]:
    known = {f.name for f in fields(RunConfig)}
    out: dict[str, Any] = {}
    for key, value in values.items():
        name = key.replace("-", "_")
        name = _ALIASES.get(name, name)
        if name not in known:
            raise ConfigError(f"Unknown config key {key!r} in {source}")
        out[name] = value
    return out


def _read_config_file(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return _normalize(data, str(path))


def _from_env() -> dict[str, Any]:
    values: dict[str, Any] = {}
    seed = os.getenv("S3M_SEED")
    if seed:
        try:
            values["seed"] = int(seed)
        except ValueError as e:
            raise ConfigError(f"S3M_SEED must be an integer, got {seed!r}") from e
    log_file = os.getenv("S3M_LOG_FILE")
    if log_file:
        values["log_path"] = Path(log_file)
    return values


def load_config(
    config_path: Optional[Path] = None,
    env_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Resolve a RunConfig. Later sources win: env, config file, flags."""
    search_paths = [
        env_path,
        Path.cwd() / ".env",
        _xdg_config_home() / "s3m" / ".env",
    ]
    for p in search_paths:
        if p and Path(p).exists():
            load_dotenv(p)
            break

    values = _from_env()
    if config_path is not None:
        values.update(_read_config_file(config_path))
    if overrides:
        values.update(
            _normalize({k: v for k, v in overrides.items() if v is not None}, "flags")
        )
    try:
        return replace(RunConfig(), **values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration value: {e}") from e

"""Shared fixtures for tests."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterator

import pytest

from s3m.parsers.jsonl_parser import trace_to_record
from s3m.traces.models import Dataset, Split, StackTrace
from s3m.traces.split import DAY_SECONDS

TOY_BUCKETS = 5
TOY_PER_BUCKET = 4
TOY_FRAMES = 5


def toy_frames(bucket: int, variant: int) -> list[str]:
    """Near-duplicate traces: each variant drops one frame of its bucket's base stack."""
    base = [f"org.b{bucket}.Mod{bucket}.f{j}" for j in range(TOY_FRAMES)]
    del base[1 + variant % (TOY_FRAMES - 1)]
    return base


def toy_traces() -> list[StackTrace]:
    """5 buckets x 4 reports, term-disjoint across buckets, one report per day.

    Report k of bucket b arrives on day 5k + b, so every bucket's later
    reports see earlier reports from all buckets.
    """
    traces = []
    for k in range(TOY_PER_BUCKET):
        for b in range(TOY_BUCKETS):
            day = k * TOY_BUCKETS + b
            traces.append(
                StackTrace.from_names(
                    report_id=100 + day,
                    bucket_id=b,
                    timestamp=day * DAY_SECONDS + 60,
                    names=toy_frames(b, k),
                )
            )
    return traces


@pytest.fixture
def toy_dataset() -> Dataset:
    return Dataset(tuple(toy_traces()))


@pytest.fixture
def toy_split(toy_dataset: Dataset) -> Split:
    """Everything in train; the last report of each bucket doubles as a test query."""
    test = Dataset(tuple(t for t in toy_dataset if t.timestamp >= 15 * DAY_SECONDS))
    train = Dataset(tuple(t for t in toy_dataset if t.timestamp < 15 * DAY_SECONDS))
    return Split(
        train=train,
        validation=Dataset(()),
        test=test,
        boundaries=(15 * DAY_SECONDS, 15 * DAY_SECONDS),
        start=0,
        end=20 * DAY_SECONDS,
    )


@pytest.fixture
def toy_jsonl(tmp_path: Path) -> Path:
    path = tmp_path / "toy.jsonl"
    lines = [json.dumps(trace_to_record(t)) for t in toy_traces()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def small_dims() -> dict[str, int]:
    return {"embed_dim": 8, "hidden_dim": 8, "classifier_hidden": 16}


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Keep developer .env files and S3M_* variables out of tests."""
    monkeypatch.delenv("S3M_SEED", raising=False)
    monkeypatch.delenv("S3M_LOG_FILE", raising=False)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    monkeypatch.chdir(tmp_path)


@pytest.fixture(autouse=True)
def _reset_cli_logging() -> Iterator[None]:
    """Drop handlers main() attached, so later tests never write to a closed capture stream."""
    yield
    logger = logging.getLogger("s3m")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

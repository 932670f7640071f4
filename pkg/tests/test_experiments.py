"""Desk-scale ordering experiment on the real NetBeans corpus.

Slow and data-dependent: runs only with `pytest -m slow` and with
S3M_NETBEANS_CORPUS pointing at the released JSON corpus.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import pytest

from s3m.app import main

CORPUS_ENV = "S3M_NETBEANS_CORPUS"

pytestmark = pytest.mark.slow


@pytest.fixture
def corpus() -> Path:
    value = os.environ.get(CORPUS_ENV)
    if not value or not Path(value).exists():
        pytest.skip(f"{CORPUS_ENV} is not set to a NetBeans corpus file")
    return Path(value)


class TestOrdering:
    def test_s3m_beats_both_baselines(self, corpus: Path, tmp_path: Path, capsys):
        started = time.perf_counter()
        data = tmp_path / "split"
        code = main(
            [
                "prepare",
                "--input", str(corpus),
                "--format", "netbeans",
                "--out", str(data),
                "--downsample", "2000",
                "--min-bucket-size", "2",
            ]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["downsampled"]["reports"] >= 2000

        assert main(["compare", "--data", str(data), "--json"]) == 0
        reports = json.loads(capsys.readouterr().out)
        s3m = reports["S3M (trim 0)"]["mrr"]
        prefix = reports["Prefix Match (trim 0)"]["mrr"]
        tfidf = reports["TF-IDF (trim 0)"]["mrr"]
        assert s3m > tfidf
        assert s3m > prefix
        assert time.perf_counter() - started < 3600

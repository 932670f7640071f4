"""Reader for the released NetBeans stack trace corpus.

The corpus is a JSON array (or JSON-lines) of reports shaped like::

    {"id": 123, "timestamp": 1262304000000, "dup_id": 77,
     "elements": [{"name": "org.netbeans.Foo.bar", "file": ..., "line": ...}, ...]}

Timestamps are milliseconds. Duplicate labels may live in the records
(`dup_id`) or in a separate CSV with `id,dup_id` columns. Duplicate links are
followed to their root report, whose id becomes the bucket id; a report with
no `dup_id` roots its own bucket.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterator, Optional

from s3m.traces.models import Dataset, DatasetError, Frame, StackTrace

from .base import BaseParser

log = logging.getLogger(__name__)


def read_labels(labels_path: Path) -> dict[int, int]:
    labels: dict[int, int] = {}
    with labels_path.open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                report_id = int(row["id"])
            except (KeyError, TypeError, ValueError):
                continue
            dup = (row.get("dup_id") or "").strip()
            if dup and dup.lower() not in ("none", "null", "nan"):
                labels[report_id] = int(float(dup))
    return labels


class NetBeansParser(BaseParser):
    FORMAT = "netbeans"
    SUPPORTED_EXTENSIONS = (".json",)

    def __init__(self, labels_path: Optional[Path] = None) -> None:
        super().__init__()
        self._labels = read_labels(labels_path) if labels_path else {}

    def parse(self, file_path: Path) -> Dataset:
        self.malformed = 0
        try:
            text = file_path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise DatasetError(f"Cannot read corpus {file_path}: {e}") from e

        rows: dict[int, tuple[int, list[str]]] = {}
        dups: dict[int, int] = {}
        for record in self._records(text):
            parsed = self._convert(record)
            if parsed is None or parsed[0] in rows:
                self.malformed += 1
                continue
            report_id, timestamp, names, dup = parsed
            rows[report_id] = (timestamp, names)
            if dup is not None and dup != report_id:
                dups[report_id] = dup

        if self.malformed:
            log.warning("%s: %d reports skipped", file_path, self.malformed)
        if not rows:
            raise DatasetError(f"No usable reports in {file_path}")

        traces = [
            StackTrace.from_names(rid, _resolve_bucket(rid, dups), ts, names)
            for rid, (ts, names) in rows.items()
        ]
        return Dataset(tuple(traces))

    def _records(self, text: str) -> Iterator[Any]:
        stripped = text.lstrip()
        if stripped.startswith("["):
            try:
                yield from json.loads(stripped)
            except json.JSONDecodeError as e:
                raise DatasetError(f"Corpus is not valid JSON: {e}") from e
            return
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                self.malformed += 1

    def _convert(
        self, record: Any
    ) -> Optional[tuple[int, int, list[str], Optional[int]]]:
        if not isinstance(record, dict):
            return None
        try:
            report_id = int(record["id"])
            timestamp = int(record["timestamp"]) // 1000
            dup = self._labels.get(report_id, record.get("dup_id"))
            dup = None if dup is None else int(dup)
        except (KeyError, TypeError, ValueError):
            return None

        names = [
            el["name"]
            for el in record.get("elements") or []
            if isinstance(el, dict) and isinstance(el.get("name"), str) and el["name"]
        ]
        if not names or timestamp < 0:
            return None
        try:
            for name in names:
                Frame(name)
        except DatasetError:
            return None
        return report_id, timestamp, names, dup


def _resolve_bucket(report_id: int, dups: dict[int, int]) -> int:
    """Follow duplicate-of links to the root report; cycles stop at the first repeat."""
    current = report_id
    visited = {current}
    while current in dups:
        nxt = dups[current]
        if nxt in visited:
            break
        visited.add(nxt)
        current = nxt
    return current

"""JSON-lines dataset format and split artifacts."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from s3m.traces.models import Dataset, DatasetError, Split, StackTrace

from .base import BaseParser

log = logging.getLogger(__name__)

SPLIT_FILES = {
    "train": "train.jsonl",
    "validation": "validation.jsonl",
    "test": "test.jsonl",
}
SPLIT_META = "split.json"


def record_to_trace(record: Any) -> StackTrace:
    """Validate one decoded record. Raises DatasetError on any violation."""
    if not isinstance(record, dict):
        raise DatasetError("record is not an object")
    for key in ("report_id", "bucket_id", "timestamp"):
        value = record.get(key)
        if not isinstance(value, int) or isinstance(value, bool):
            raise DatasetError(f"{key} must be an integer")
    frames = record.get("frames")
    if not isinstance(frames, list) or not frames:
        raise DatasetError("frames must be a non-empty array")
    if not all(isinstance(f, str) and f for f in frames):
        raise DatasetError("frames must be non-empty strings")
    return StackTrace.from_names(
        record["report_id"], record["bucket_id"], record["timestamp"], frames
    )


def trace_to_record(trace: StackTrace) -> dict:
    return {
        "report_id": trace.report_id,
        "bucket_id": trace.bucket_id,
        "timestamp": trace.timestamp,
        "frames": trace.frame_names(),
    }


class JsonlParser(BaseParser):
    FORMAT = "jsonl"
    SUPPORTED_EXTENSIONS = (".jsonl", ".ndjson")

    def parse(self, file_path: Path) -> Dataset:
        self.malformed = 0
        try:
            text = file_path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise DatasetError(f"Cannot read dataset {file_path}: {e}") from e

        traces: list[StackTrace] = []
        seen: set[int] = set()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                trace = record_to_trace(json.loads(line))
                if trace.report_id in seen:
                    raise DatasetError(f"duplicate report_id {trace.report_id}")
            except (json.JSONDecodeError, DatasetError) as e:
                self.malformed += 1
                log.warning("%s:%d: skipping malformed record: %s", file_path, lineno, e)
                continue
            seen.add(trace.report_id)
            traces.append(trace)

        if self.malformed:
            log.warning("%s: %d malformed lines skipped", file_path, self.malformed)
        if not traces:
            raise DatasetError(f"No valid records in {file_path}")
        return Dataset(tuple(traces))

    @staticmethod
    def write(dataset: Dataset, file_path: Path) -> None:
        with file_path.open("w", encoding="utf-8") as fh:
            for trace in dataset.traces:
                fh.write(json.dumps(trace_to_record(trace), separators=(",", ":")))
                fh.write("\n")


def write_split(split: Split, out_dir: Path, summary: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, filename in SPLIT_FILES.items():
        JsonlParser.write(getattr(split, name), out_dir / filename)
    (out_dir / SPLIT_META).write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8"
    )


def _read_partition(path: Path) -> Dataset:
    # An empty validation file is a legal partition.
    if path.exists() and not path.read_text(encoding="utf-8").strip():
        return Dataset(())
    return JsonlParser().parse(path)


def load_split(data_dir: Path) -> Split:
    """Restore a split written by `write_split`."""
    for filename in SPLIT_FILES.values():
        if not (data_dir / filename).exists():
            raise DatasetError(f"Missing split file {data_dir / filename}")
    parts = {name: _read_partition(data_dir / f) for name, f in SPLIT_FILES.items()}

    meta_path = data_dir / SPLIT_META
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            boundaries = tuple(meta["boundaries"])
            start, end, dropped = meta["start"], meta["end"], meta.get("dropped", 0)
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DatasetError(f"Invalid split metadata {meta_path}: {e!r}") from e
    else:
        val_start = (
            parts["validation"].traces[0].timestamp
            if len(parts["validation"])
            else parts["test"].traces[0].timestamp
        )
        boundaries = (val_start, parts["test"].traces[0].timestamp)
        start = parts["train"].traces[0].timestamp
        end = parts["test"].traces[-1].timestamp + 1
        dropped = 0

    return Split(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        boundaries=(int(boundaries[0]), int(boundaries[1])),
        start=int(start),
        end=int(end),
        dropped=int(dropped),
    )

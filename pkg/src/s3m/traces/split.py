"""Time-aware train/validation/test split."""

from __future__ import annotations

import logging

import numpy as np

from .models import Dataset, Split

log = logging.getLogger(__name__)

DAY_SECONDS = 86_400

# Published NetBeans partition sizes for the default window.
NETBEANS_REFERENCE = {
    "durations_days": (4200, 140, 700),
    "start": "1998-09-25",
    "buckets": {"train": 31349, "validation": 1592, "test": 5909},
    "reports": {"train": 39789, "validation": 1976, "test": 7792},
}


class SplitError(ValueError):
    """Raised when a split cannot satisfy its contract."""


def time_split(
    ds: Dataset,
    train_days: int,
    val_days: int,
    test_days: int,
    start: int | None = None,
) -> Split:
    """Assign traces to half-open windows [start, +train), [.., +val), [.., +test)."""
    for name, days in (("train", train_days), ("val", val_days), ("test", test_days)):
        if days < 1:
            raise SplitError(f"{name}_days must be >= 1, got {days}")
    if not ds.traces:
        raise SplitError("Cannot split an empty dataset")
    if start is None:
        start = ds.traces[0].timestamp
    if start > ds.traces[-1].timestamp:
        raise SplitError(
            f"Split start {start} is after the last timestamp {ds.traces[-1].timestamp}"
        )

    val_start = start + train_days * DAY_SECONDS
    test_start = val_start + val_days * DAY_SECONDS
    end = test_start + test_days * DAY_SECONDS

    train, val, test = [], [], []
    dropped = 0
    for trace in ds.traces:
        ts = trace.timestamp
        if ts < start or ts >= end:
            dropped += 1
        elif ts < val_start:
            train.append(trace)
        elif ts < test_start:
            val.append(trace)
        else:
            test.append(trace)

    if dropped:
        log.warning("Dropped %d traces outside the split window", dropped)
    if not train:
        raise SplitError("Train partition is empty")
    if not test:
        raise SplitError("Test partition is empty")

    return Split(
        train=Dataset(tuple(train)),
        validation=Dataset(tuple(val)),
        test=Dataset(tuple(test)),
        boundaries=(val_start, test_start),
        start=start,
        end=end,
        dropped=dropped,
    )


def downsample(
    ds: Dataset, n_reports: int, min_bucket_size: int = 2, seed: int = 0
) -> Dataset:
    """Keep whole random buckets of at least `min_bucket_size` reports.

    Buckets are drawn in a seeded random order until `n_reports` reports are
    kept, so every kept report still has its duplicates.
    """
    if n_reports < 1:
        raise SplitError(f"n_reports must be >= 1, got {n_reports}")
    if min_bucket_size < 1:
        raise SplitError(f"min_bucket_size must be >= 1, got {min_bucket_size}")
    eligible = sorted(b for b, ids in ds.buckets.items() if len(ids) >= min_bucket_size)
    if not eligible:
        raise SplitError(f"No bucket has at least {min_bucket_size} reports")

    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    total = 0
    for i in rng.permutation(len(eligible)):
        if total >= n_reports:
            break
        bucket = eligible[int(i)]
        keep.add(bucket)
        total += len(ds.buckets[bucket])
    if total < n_reports:
        log.warning(
            "Only %d reports in buckets of size >= %d; wanted %d",
            total,
            min_bucket_size,
            n_reports,
        )
    return Dataset(tuple(t for t in ds.traces if t.bucket_id in keep))


def summarize_split(split: Split) -> dict:
    """Per-partition bucket/report counts and average bucket size."""
    parts = {}
    for name, ds in (
        ("train", split.train),
        ("validation", split.validation),
        ("test", split.test),
    ):
        parts[name] = {
            "buckets": len(ds.buckets),
            "reports": len(ds),
            "avg_bucket_size": round(ds.average_bucket_size(), 4),
        }
    return {
        "start": split.start,
        "boundaries": list(split.boundaries),
        "end": split.end,
        "dropped": split.dropped,
        "partitions": parts,
    }


def compare_with_reference(summary: dict, reference: dict = NETBEANS_REFERENCE) -> dict:
    """Diagnostic deltas against published partition counts; never asserted."""
    deltas = {}
    for part, stats in summary["partitions"].items():
        deltas[part] = {
            "buckets": stats["buckets"] - reference["buckets"][part],
            "reports": stats["reports"] - reference["reports"][part],
        }
    return {"reference": reference, "deltas": deltas}

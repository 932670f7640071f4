"""Data models for crash reports, datasets and vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional

PAD_ID = 0
OOV_ID = 1


class DatasetError(ValueError):
    """Raised when a dataset is unreadable or violates its invariants."""


@dataclass(frozen=True)
class Frame:
    raw: str  # fully qualified name, e.g. com.foo.Bar.baz
    segments: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if not self.raw:
            raise DatasetError("Frame name must be non-empty")
        segments = tuple(self.raw.split("."))
        if not all(segments):
            raise DatasetError(f"Frame name {self.raw!r} has an empty segment")
        object.__setattr__(self, "segments", segments)


@dataclass(frozen=True)
class StackTrace:
    report_id: int
    bucket_id: int
    timestamp: int  # seconds since epoch, UTC
    frames: tuple[Frame, ...]  # index 0 = top of stack

    def __post_init__(self) -> None:
        if not self.frames:
            raise DatasetError(f"Report {self.report_id} has no frames")
        if self.timestamp < 0:
            raise DatasetError(
                f"Report {self.report_id} has negative timestamp {self.timestamp}"
            )

    @classmethod
    def from_names(
        cls, report_id: int, bucket_id: int, timestamp: int, names: Iterable[str]
    ) -> StackTrace:
        return cls(
            report_id=report_id,
            bucket_id=bucket_id,
            timestamp=timestamp,
            frames=tuple(Frame(n) for n in names),
        )

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.timestamp, self.report_id)

    def frame_names(self) -> list[str]:
        return [f.raw for f in self.frames]


@dataclass(frozen=True)
class Dataset:
    """Reports sorted by (timestamp, report_id), grouped into buckets."""

    traces: tuple[StackTrace, ...]
    buckets: Mapping[int, tuple[int, ...]] = field(init=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.traces, key=lambda t: t.sort_key))
        seen: set[int] = set()
        groups: dict[int, list[int]] = {}
        for trace in ordered:
            if trace.report_id in seen:
                raise DatasetError(f"Duplicate report_id {trace.report_id}")
            seen.add(trace.report_id)
            groups.setdefault(trace.bucket_id, []).append(trace.report_id)
        object.__setattr__(self, "traces", ordered)
        object.__setattr__(
            self,
            "buckets",
            MappingProxyType({b: tuple(ids) for b, ids in groups.items()}),
        )

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[StackTrace]:
        return iter(self.traces)

    @property
    def timestamps(self) -> list[int]:
        return [t.timestamp for t in self.traces]

    def get(self, report_id: int) -> Optional[StackTrace]:
        for trace in self.traces:
            if trace.report_id == report_id:
                return trace
        return None

    def merged(self, *others: Dataset) -> Dataset:
        traces = list(self.traces)
        for other in others:
            traces.extend(other.traces)
        return Dataset(tuple(traces))

    def average_bucket_size(self) -> float:
        if not self.buckets:
            return 0.0
        return len(self.traces) / len(self.buckets)


@dataclass(frozen=True)
class Vocabulary:
    """Trimmed-token to id map. Ids 0 and 1 are reserved for PAD and OOV."""

    tokens: tuple[str, ...]  # token at position i has id i + 2
    trim_level: int

    def __post_init__(self) -> None:
        mapping = {tok: i + 2 for i, tok in enumerate(self.tokens)}
        if len(mapping) != len(self.tokens):
            raise DatasetError("Vocabulary tokens must be distinct")
        object.__setattr__(self, "_index", MappingProxyType(mapping))

    @property
    def token_to_id(self) -> Mapping[str, int]:
        return self._index  # type: ignore[attr-defined]

    def lookup(self, token: str) -> int:
        return self._index.get(token, OOV_ID)  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.tokens) + 2

    def __contains__(self, token: object) -> bool:
        return token in self._index  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Split:
    train: Dataset
    validation: Dataset
    test: Dataset
    boundaries: tuple[int, int]  # validation start, test start
    start: int = 0
    end: int = 0
    dropped: int = 0  # traces outside [start, end)

    def stream(self, include_test: bool = True) -> Dataset:
        if include_test:
            return self.train.merged(self.validation, self.test)
        return self.train.merged(self.validation)

"""Frame trimming, tokenization and vocabulary encoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .models import Dataset, Frame, StackTrace, Vocabulary

TRIM_LEVELS = (0, 1, 2, 3)
TRIM_LABELS = {0: "function", 1: "class", 2: "package", 3: "package-1"}
DEFAULT_MAX_LEN = 100


def _check_level(level: int) -> None:
    if level not in TRIM_LEVELS:
        raise ValueError(f"Trim level must be one of 0..3, got {level}")


def trim_frame(frame: Frame, level: int) -> str:
    """Drop the last `level` name segments, never going below the first one."""
    _check_level(level)
    if level == 0:
        return frame.raw
    keep = max(1, len(frame.segments) - level)
    return ".".join(frame.segments[:keep])


def collapse_recursion(tokens: Iterable[str]) -> list[str]:
    """Merge runs of identical consecutive tokens into a single token."""
    out: list[str] = []
    for tok in tokens:
        if not out or out[-1] != tok:
            out.append(tok)
    return out


def tokenize(
    trace: StackTrace,
    level: int,
    max_len: int | None = DEFAULT_MAX_LEN,
    collapse: bool = False,
) -> list[str]:
    """Trimmed tokens in stored order (top of stack first), cut to max_len."""
    if max_len is not None and max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if collapse:
        tokens = collapse_recursion(trim_frame(f, level) for f in trace.frames)
        return tokens[:max_len]
    frames = trace.frames if max_len is None else trace.frames[:max_len]
    return [trim_frame(f, level) for f in frames]


def build_vocab(
    train: Dataset | Sequence[StackTrace], level: int, collapse: bool = False
) -> Vocabulary:
    """Collect every distinct trimmed token in train; ids assigned in sorted order."""
    _check_level(level)
    traces = train.traces if isinstance(train, Dataset) else tuple(train)
    if not traces:
        raise ValueError("Cannot build a vocabulary from an empty training set")
    seen: set[str] = set()
    for trace in traces:
        seen.update(tokenize(trace, level, max_len=None, collapse=collapse))
    return Vocabulary(tokens=tuple(sorted(seen)), trim_level=level)


def encode(vocab: Vocabulary, tokens: Sequence[str]) -> list[int]:
    if not tokens:
        raise ValueError("Cannot encode an empty token sequence")
    return [vocab.lookup(t) for t in tokens]


@dataclass(frozen=True)
class Preprocessing:
    """How traces become model inputs. Travels with the model bundle."""

    trim_level: int = 0
    max_len: int = DEFAULT_MAX_LEN
    collapse_recursion: bool = False

    def __post_init__(self) -> None:
        _check_level(self.trim_level)
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")

    def tokens(self, trace: StackTrace) -> list[str]:
        return tokenize(
            trace, self.trim_level, self.max_len, collapse=self.collapse_recursion
        )

    def ids(self, vocab: Vocabulary, trace: StackTrace) -> list[int]:
        return encode(vocab, self.tokens(trace))

    def build_vocab(self, train: Dataset | Sequence[StackTrace]) -> Vocabulary:
        return build_vocab(train, self.trim_level, collapse=self.collapse_recursion)

    def to_dict(self) -> dict:
        return {
            "trim_level": self.trim_level,
            "max_len": self.max_len,
            "collapse_recursion": self.collapse_recursion,
        }

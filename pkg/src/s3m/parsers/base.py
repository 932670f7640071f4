"""Base parser interface for crash report dataset formats."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from pathlib import Path

from s3m.traces.models import Dataset

log = logging.getLogger(__name__)


class BaseParser(ABC):
    """Abstract base for format-specific dataset readers."""

    FORMAT: str = ""
    SUPPORTED_EXTENSIONS: tuple[str, ...] = ()

    def __init__(self) -> None:
        self.malformed = 0  # records skipped during the last parse

    @abstractmethod
    def parse(self, file_path: Path) -> Dataset:
        """Parse a file and return a timestamp-sorted dataset."""

    @classmethod
    def can_handle(cls, file_path: Path) -> bool:
        return file_path.suffix.lower() in cls.SUPPORTED_EXTENSIONS


def _parsers() -> list[type[BaseParser]]:
    from s3m.parsers.jsonl_parser import JsonlParser
    from s3m.parsers.netbeans_parser import NetBeansParser

    return [JsonlParser, NetBeansParser]


def get_parser(fmt: str | None = None, file_path: Path | None = None) -> BaseParser:
    """Return a parser by format name, or by file extension when no name is given."""
    parsers = _parsers()
    for parser_cls in parsers:
        if fmt is not None and parser_cls.FORMAT == fmt:
            return parser_cls()
        if fmt is None and file_path is not None and parser_cls.can_handle(file_path):
            return parser_cls()

    supported = [p.FORMAT for p in parsers]
    raise ValueError(
        f"Unsupported format: {fmt or file_path}. Supported: {', '.join(supported)}"
    )


def parse_dataset(path: Path, fmt: str = "jsonl") -> Dataset:
    parser = get_parser(fmt)
    dataset = parser.parse(Path(path))
    log.info(
        "Parsed %d reports in %d buckets from %s (%d malformed)",
        len(dataset),
        len(dataset.buckets),
        path,
        parser.malformed,
    )
    return dataset

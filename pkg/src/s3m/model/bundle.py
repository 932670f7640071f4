"""Model bundle file: config, preprocessing, vocabulary and weights in one file.

Layout::

    b"S3M1"
    uint32 LE  header length
    header     UTF-8 JSON (sorted keys)
    float64 LE parameters, concatenated in `parameter_shapes` order
    uint32 LE  CRC-32 of everything between the magic and the checksum
"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from s3m.autodiff.optim import ParamStore
from s3m.traces.models import Vocabulary
from s3m.traces.preprocess import Preprocessing

from .network import ModelConfig, S3MParams, parameter_shapes

log = logging.getLogger(__name__)

MAGIC = b"S3M1"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


class BundleError(ValueError):
    """Raised for unreadable, corrupt or incompatible model bundles."""


@dataclass
class S3MModel:
    """A trained (or training) model together with everything needed to use it."""

    params: S3MParams
    vocab: Vocabulary
    preprocessing: Preprocessing
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    def check_trim(self, trim_level: Optional[int]) -> bool:
        """Warn, but allow, when a caller expects another trim level."""
        if trim_level is None or trim_level == self.preprocessing.trim_level:
            return True
        log.warning(
            "Bundle was trained with trim level %d, caller asked for %d; using %d",
            self.preprocessing.trim_level,
            trim_level,
            self.preprocessing.trim_level,
        )
        self.metadata["requested_trim_level"] = trim_level
        return False


def to_bytes(model: S3MModel) -> bytes:
    shapes = parameter_shapes(model.config)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "preprocessing": model.preprocessing.to_dict(),
        "trim_level": model.vocab.trim_level,
        "vocabulary": list(model.vocab.tokens),
        "parameters": [[name, list(shape)] for name, shape in shapes],
        "metadata": model.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    weights = b"".join(
        np.ascontiguousarray(model.params[name].value, dtype="<f8").tobytes()
        for name, _ in shapes
    )
    payload = _U32.pack(len(header_bytes)) + header_bytes + weights
    return MAGIC + payload + _U32.pack(zlib.crc32(payload))


def from_bytes(data: bytes) -> S3MModel:
    if len(data) < len(MAGIC) + 2 * _U32.size:
        raise BundleError("Bundle is truncated")
    if data[: len(MAGIC)] != MAGIC:
        raise BundleError(f"Not an S3M bundle (magic {data[:len(MAGIC)]!r})")

    payload = data[len(MAGIC) : -_U32.size]
    (expected,) = _U32.unpack(data[-_U32.size :])
    actual = zlib.crc32(payload)
    if actual != expected:
        raise BundleError(
            f"Checksum mismatch (stored {expected:#010x}, computed {actual:#010x}); "
            "the file is corrupt or truncated"
        )

    (header_len,) = _U32.unpack(payload[: _U32.size])
    try:
        header = json.loads(payload[_U32.size : _U32.size + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BundleError(f"Unreadable bundle header: {e}") from e

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(
            f"Unsupported bundle version {version}; this build reads version {FORMAT_VERSION}"
        )

    config = ModelConfig(**header["config"])
    vocab = Vocabulary(tokens=tuple(header["vocabulary"]), trim_level=header["trim_level"])
    if len(vocab) != config.vocab_size:
        raise BundleError(
            f"Vocabulary has {len(vocab)} ids but config says {config.vocab_size}"
        )
    shapes = parameter_shapes(config)
    stored = [(n, tuple(s)) for n, s in header["parameters"]]
    if stored != shapes:
        raise BundleError("Parameter layout in bundle does not match the model config")

    weights = payload[_U32.size + header_len :]
    expected_len = sum(int(np.prod(s)) for _, s in shapes) * 8
    if len(weights) != expected_len:
        raise BundleError(f"Weight block is {len(weights)} bytes, expected {expected_len}")

    store = ParamStore()
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape))
        values = np.frombuffer(weights, dtype="<f8", count=count, offset=offset)
        store.add(name, values.reshape(shape).astype(np.float64))
        offset += count * 8

    return S3MModel(
        params=S3MParams(config, store),
        vocab=vocab,
        preprocessing=Preprocessing(**header["preprocessing"]),
        metadata=header.get("metadata", {}),
    )


def save(model: S3MModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model))
    log.info("Saved model bundle to %s", path)


def load(path: Path) -> S3MModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise BundleError(f"Cannot read bundle {path}: {e}") from e
    return from_bytes(data)

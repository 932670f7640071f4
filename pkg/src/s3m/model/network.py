"""The S3M network: embeddings, biLSTM encoder, symmetric features, ReLU head.

Both traces of a pair go through the same encoder (siamese sharing), and the
pair features |v1 - v2|, (v1 + v2) / 2, v1 * v2 are symmetric, so
score_pair(a, b) == score_pair(b, a) exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from s3m.autodiff import tensor as T
from s3m.autodiff.optim import ParamStore
from s3m.autodiff.tensor import ShapeError, Tensor

DIRECTIONS = ("fwd", "bwd")
GATES = ("input", "forget", "output", "candidate")
N_FEATURE_BLOCKS = 3  # |diff|, mean, product


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 50
    hidden_dim: int = 100
    classifier_hidden: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        for name in ("embed_dim", "hidden_dim", "classifier_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def encoding_dim(self) -> int:
        return 2 * self.hidden_dim

    @property
    def feature_dim(self) -> int:
        return N_FEATURE_BLOCKS * self.encoding_dim

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Every parameter in the fixed order used for init and serialization."""
    e, h, c = config.embed_dim, config.hidden_dim, config.classifier_hidden
    shapes: list[tuple[str, tuple[int, ...]]] = [("embedding", (config.vocab_size, e))]
    for d in DIRECTIONS:
        for g in GATES:
            shapes.append((f"{d}.W_{g}", (h, e + h)))
            shapes.append((f"{d}.b_{g}", (h,)))
    shapes += [
        ("cls.W1", (c, config.feature_dim)),
        ("cls.b1", (c,)),
        ("cls.W2", (1, c)),
        ("cls.b2", (1,)),
    ]
    return shapes


class S3MParams:
    """All trainable weights of one model, backed by a ParamStore."""

    def __init__(self, config: ModelConfig, store: ParamStore) -> None:
        self.config = config
        self.store = store

    def __getitem__(self, name: str) -> Tensor:
        return self.store[name]

    def names(self) -> list[str]:
        return [name for name, _ in parameter_shapes(self.config)]


@dataclass(frozen=True)
class Encoding:
    vector: Tensor  # forward final hidden ‖ backward final hidden

    def __len__(self) -> int:
        return self.vector.size


def init(config: ModelConfig) -> S3MParams:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) init, deterministic in config.seed."""
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / math.sqrt(config.hidden_dim)
    store = ParamStore()
    for name, shape in parameter_shapes(config):
        store.add(name, rng.uniform(-bound, bound, size=shape))
    return S3MParams(config, store)


def _lstm_final_hidden(params: S3MParams, direction: str, xs: Sequence[Tensor]) -> Tensor:
    w = {g: params[f"{direction}.W_{g}"] for g in GATES}
    b = {g: params[f"{direction}.b_{g}"] for g in GATES}
    h = T.zeros(params.config.hidden_dim)
    c = T.zeros(params.config.hidden_dim)
    for x in xs:
        z = T.concat(x, h)
        i = T.sigmoid(T.add(T.matvec(w["input"], z), b["input"]))
        f = T.sigmoid(T.add(T.matvec(w["forget"], z), b["forget"]))
        o = T.sigmoid(T.add(T.matvec(w["output"], z), b["output"]))
        g = T.tanh(T.add(T.matvec(w["candidate"], z), b["candidate"]))
        c = T.add(T.hadamard(f, c), T.hadamard(i, g))
        h = T.hadamard(o, T.tanh(c))
    return h


def encode_trace(params: S3MParams, ids: Sequence[int]) -> Encoding:
    """Run the LSTM pair over ids and its reverse; concatenate final hidden states."""
    if len(ids) == 0:
        raise ValueError("Cannot encode an empty id sequence")
    vocab_size = params.config.vocab_size
    for i in ids:
        if not 1 <= i < vocab_size:
            raise ValueError(f"Token id {i} outside 1..{vocab_size - 1}")
    table = params["embedding"]
    xs = [T.row(table, int(i)) for i in ids]
    forward = _lstm_final_hidden(params, "fwd", xs)
    backward = _lstm_final_hidden(params, "bwd", xs[::-1])
    return Encoding(T.concat(forward, backward))


def features(v1: Encoding, v2: Encoding) -> Tensor:
    a, b = v1.vector, v2.vector
    if a.shape != b.shape:
        raise ShapeError(f"features: encoding shapes differ {a.shape} vs {b.shape}")
    diff = T.abs(T.sub(a, b))
    mean = T.scale(T.add(a, b), 0.5)
    prod = T.hadamard(a, b)
    return T.concat(T.concat(diff, mean), prod)


def similarity(params: S3MParams, f: Tensor) -> Tensor:
    """W2 · relu(W1 · f + b1) + b2, unsquashed."""
    hidden = T.relu(T.add(T.matvec(params["cls.W1"], f), params["cls.b1"]))
    return T.add(T.matvec(params["cls.W2"], hidden), params["cls.b2"])


def score_pair(params: S3MParams, ids1: Sequence[int], ids2: Sequence[int]) -> Tensor:
    return similarity(
        params, features(encode_trace(params, ids1), encode_trace(params, ids2))
    )


def classify_many(params: S3MParams, query: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Score one cached encoding against each row of a matrix of cached encodings.

    Runs the exact ops of `score_pair` per row (no tape is active), so a score
    from cached encodings is bit-identical to recomputing the pair.
    """
    if candidates.ndim != 2 or candidates.shape[1] != query.shape[0]:
        raise ShapeError(
            f"classify_many: query {query.shape} vs candidates {candidates.shape}"
        )
    q = Encoding(T.constant(query))
    return np.array(
        [similarity(params, features(q, Encoding(T.constant(c)))).item() for c in candidates],
        dtype=float,
    )

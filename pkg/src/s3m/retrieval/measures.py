"""Trace similarity measures: prefix match, TF-IDF and the trained S3M model."""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from s3m.model.bundle import S3MModel
from s3m.model.network import classify_many, encode_trace, features, similarity
from s3m.traces.models import StackTrace
from s3m.traces.preprocess import tokenize

from .tfidf import TfIdfIndex, tfidf_score


class SimilarityMeasure(ABC):
    """(query, candidate) -> score, higher is more similar. Deterministic."""

    name: str = ""

    @abstractmethod
    def score(self, a: StackTrace, b: StackTrace) -> float:
        """Score one pair."""

    def prepare(self, traces: Sequence[StackTrace]) -> None:
        """Precompute per-trace state for a known corpus. Optional."""

    def score_many(self, query: StackTrace, candidates: Sequence[StackTrace]) -> np.ndarray:
        return np.array([self.score(query, c) for c in candidates], dtype=np.float64)


# ── Prefix match ───────────────────────────────────────


def prefix_match(a: StackTrace, b: StackTrace, trim_level: int = 0) -> float:
    """Longest common prefix of trimmed frames over the longer trace's length."""
    ta = tokenize(a, trim_level, max_len=None)
    tb = tokenize(b, trim_level, max_len=None)
    return _prefix_ratio(ta, tb)


def _prefix_ratio(ta: Sequence[str], tb: Sequence[str]) -> float:
    common = 0
    for x, y in zip(ta, tb):
        if x != y:
            break
        common += 1
    return common / max(len(ta), len(tb))


class PrefixMatchMeasure(SimilarityMeasure):
    name = "Prefix Match"

    def __init__(self, trim_level: int = 0) -> None:
        self.trim_level = trim_level
        self._tokens: dict[int, tuple[str, ...]] = {}

    def _tokens_of(self, trace: StackTrace) -> tuple[str, ...]:
        toks = self._tokens.get(trace.report_id)
        if toks is None:
            toks = tuple(tokenize(trace, self.trim_level, max_len=None))
            self._tokens[trace.report_id] = toks
        return toks

    def score(self, a: StackTrace, b: StackTrace) -> float:
        return _prefix_ratio(self._tokens_of(a), self._tokens_of(b))

    def prepare(self, traces: Sequence[StackTrace]) -> None:
        for t in traces:
            self._tokens_of(t)


# ── TF-IDF ─────────────────────────────────────────────


class TfIdfMeasure(SimilarityMeasure):
    name = "TF-IDF"

    def __init__(self, index: TfIdfIndex) -> None:
        self.index = index
        self._matrix = None
        self._rows: dict[int, int] = {}

    def score(self, a: StackTrace, b: StackTrace) -> float:
        if a.report_id in self._rows and b.report_id in self._rows:
            ra, rb = self._rows[a.report_id], self._rows[b.report_id]
            return float(self._matrix[ra].multiply(self._matrix[rb]).sum())

        return tfidf_score(a, b, self.index)

    def prepare(self, traces: Sequence[StackTrace]) -> None:
        self._matrix = self.index.vectorize(traces)
        self._rows = {t.report_id: i for i, t in enumerate(traces)}

    def score_many(self, query: StackTrace, candidates: Sequence[StackTrace]) -> np.ndarray:
        rows = [self._rows.get(c.report_id) for c in candidates]
        if self._matrix is None or query.report_id not in self._rows or None in rows:
            return super().score_many(query, candidates)
        if not rows:
            return np.zeros(0)
        block = self._matrix[rows]
        q = self._matrix[self._rows[query.report_id]]
        return (block @ q.T).toarray().ravel()


# ── Neural (S3M) ───────────────────────────────────────


class NeuralMeasure(SimilarityMeasure):
    """Scores with a frozen S3M model.

    With `cache=True` each trace is encoded once and reused across pairs. With
    `cache=False` every pair is re-encoded through `score`; both give identical
    scores.
    """

    name = "S3M"

    def __init__(self, model: S3MModel, cache: bool = True) -> None:
        self.model = model
        self.cache = cache
        self._encodings: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def encode(self, trace: StackTrace) -> np.ndarray:
        if self.cache:
            hit = self._encodings.get(trace.report_id)
            if hit is not None:
                return hit
        ids = self.model.preprocessing.ids(self.model.vocab, trace)
        vec = encode_trace(self.model.params, ids).vector.value
        if self.cache:
            with self._lock:
                self._encodings.setdefault(trace.report_id, vec)
        return vec

    def prepare(self, traces: Sequence[StackTrace]) -> None:
        if self.cache:
            for t in traces:
                self.encode(t)

    def score(self, a: StackTrace, b: StackTrace) -> float:
        ids_a = self.model.preprocessing.ids(self.model.vocab, a)
        ids_b = self.model.preprocessing.ids(self.model.vocab, b)
        params = self.model.params
        return similarity(
            params, features(encode_trace(params, ids_a), encode_trace(params, ids_b))
        ).item()

    def score_many(self, query: StackTrace, candidates: Sequence[StackTrace]) -> np.ndarray:
        if not candidates:
            return np.zeros(0)
        if not self.cache:
            return np.array([self.score(query, c) for c in candidates], dtype=float)
        q = self.encode(query)
        block = np.stack([self.encode(c) for c in candidates])
        return classify_many(self.model.params, q, block)


def make_measure(
    method: str,
    trim_level: int = 0,
    index: Optional[TfIdfIndex] = None,
    model: Optional[S3MModel] = None,
) -> SimilarityMeasure:
    if method == "prefix":
        return PrefixMatchMeasure(trim_level)
    if method == "tfidf":
        if index is None:
            raise ValueError("tfidf measure needs an index")
        return TfIdfMeasure(index)
    if method == "s3m":
        if model is None:
            raise ValueError("s3m measure needs a model")
        return NeuralMeasure(model)
    raise ValueError(f"Unknown method {method!r}; expected prefix, tfidf or s3m")

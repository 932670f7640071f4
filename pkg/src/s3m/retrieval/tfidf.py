"""TF-IDF over trimmed stack frames (the classic information-retrieval baseline).

Weights are (1 + log tf) * idf with idf = log(1 + N / df); similarity is the
cosine between weight vectors. A term the index never saw gets the idf of
df = 1.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.preprocessing import normalize

from s3m.traces.models import StackTrace
from s3m.traces.preprocess import tokenize


def _identity(tokens: list[str]) -> list[str]:
    return tokens


class TfIdfIndex:
    """Document frequencies over a frozen history of traces."""

    def __init__(self, history: Sequence[StackTrace], trim_level: int) -> None:
        self.trim_level = trim_level
        self.n_docs = len(history)
        df: Counter[str] = Counter()
        for trace in history:
            df.update(set(self.terms(trace)))
        self._df = dict(df)

    def terms(self, trace: StackTrace) -> list[str]:
        return tokenize(trace, self.trim_level, max_len=None)

    def df(self, term: str) -> int:
        return self._df.get(term, 0)

    def idf(self, term: str) -> float:
        df = self._df.get(term, 0) or 1
        return math.log(1.0 + max(self.n_docs, 1) / df)

    def vectorize(self, traces: Sequence[StackTrace]) -> sparse.csr_matrix:
        """L2-normalised weight rows, one per trace, over a shared term space."""
        counter = CountVectorizer(analyzer=_identity, lowercase=False)
        counts = counter.fit_transform([self.terms(t) for t in traces])
        counts = sparse.csr_matrix(counts, dtype=np.float64)
        counts.data = 1.0 + np.log(counts.data)
        idf = np.array([self.idf(t) for t in counter.get_feature_names_out()])
        weighted = counts @ sparse.diags(idf)
        return normalize(sparse.csr_matrix(weighted), norm="l2", copy=False)


def tfidf_score(a: StackTrace, b: StackTrace, index: TfIdfIndex) -> float:
    rows = index.vectorize([a, b])
    return float(rows[0].multiply(rows[1]).sum())


def build_tfidf_index(history: Sequence[StackTrace], trim_level: int) -> TfIdfIndex:
    return TfIdfIndex(history, trim_level)

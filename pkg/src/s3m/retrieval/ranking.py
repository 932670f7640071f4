"""Rank historical buckets for a query trace."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from s3m.traces.models import StackTrace

from .measures import SimilarityMeasure

AGGREGATIONS = ("max", "mean")


@dataclass(frozen=True)
class RankedResult:
    query_id: int
    truth_bucket: int
    bucket_ids: tuple[int, ...]  # best first; ties by ascending bucket id
    scores: tuple[float, ...]
    rank_of_truth: Optional[int]  # 1-based; None when the truth bucket has no history

    def top(self, k: int) -> tuple[int, ...]:
        return self.bucket_ids[:k]


def aggregate(
    bucket_ids: np.ndarray, scores: np.ndarray, how: str = "max"
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse trace scores to bucket scores, sorted score desc then id asc."""
    if how not in AGGREGATIONS:
        raise ValueError(f"Unknown aggregation {how!r}; expected one of {AGGREGATIONS}")
    uniq, inverse = np.unique(bucket_ids, return_inverse=True)
    if how == "max":
        agg = np.full(len(uniq), -np.inf)
        np.maximum.at(agg, inverse, scores)
    else:
        sums = np.zeros(len(uniq))
        np.add.at(sums, inverse, scores)
        agg = sums / np.bincount(inverse, minlength=len(uniq))
    order = np.lexsort((uniq, -agg))
    return uniq[order], agg[order]


def check_history(query: StackTrace, history: Sequence[StackTrace]) -> None:
    for trace in history:
        if trace.report_id == query.report_id:
            raise ValueError(f"Query {query.report_id} appears in its own candidate history")
        if trace.timestamp >= query.timestamp:
            raise ValueError(
                f"Temporal leak: report {trace.report_id} (t={trace.timestamp}) is not "
                f"before query {query.report_id} (t={query.timestamp})"
            )


def rank_from_scores(
    query: StackTrace,
    history: Sequence[StackTrace],
    scores: np.ndarray,
    aggregation: str = "max",
) -> RankedResult:
    if len(history) == 0:
        return RankedResult(query.report_id, query.bucket_id, (), (), None)
    bucket_ids = np.fromiter((t.bucket_id for t in history), dtype=np.int64, count=len(history))
    ids, agg = aggregate(bucket_ids, np.asarray(scores, dtype=np.float64), aggregation)
    hits = np.flatnonzero(ids == query.bucket_id)
    return RankedResult(
        query_id=query.report_id,
        truth_bucket=query.bucket_id,
        bucket_ids=tuple(int(b) for b in ids),
        scores=tuple(float(s) for s in agg),
        rank_of_truth=int(hits[0]) + 1 if hits.size else None,
    )


def rank_buckets(
    query: StackTrace,
    history: Sequence[StackTrace],
    measure: SimilarityMeasure,
    aggregation: str = "max",
    check: bool = True,
) -> RankedResult:
    """Score every historical trace against the query and rank their buckets."""
    history = list(history)
    if check:
        check_history(query, history)
    scores = measure.score_many(query, history) if history else np.zeros(0)
    return rank_from_scores(query, history, scores, aggregation)

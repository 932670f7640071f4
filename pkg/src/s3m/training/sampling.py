"""Training groups: a query, an earlier duplicate, and TF-IDF-hard negatives."""

from __future__ import annotations

import bisect
import logging
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Optional

import numpy as np

from s3m.retrieval.ranking import aggregate
from s3m.retrieval.tfidf import TfIdfIndex
from s3m.traces.models import Dataset, StackTrace, Vocabulary

if TYPE_CHECKING:
    from .trainer import TrainConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainGroup:
    query: tuple[int, ...]
    positive: tuple[int, ...]
    negatives: tuple[tuple[int, ...], ...]
    query_report: int
    positive_report: int
    negative_reports: tuple[int, ...]
    query_bucket: int
    negative_buckets: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.positive_report == self.query_report:
            raise ValueError(f"Report {self.query_report} cannot be its own positive")
        if self.query_bucket in self.negative_buckets:
            raise ValueError(
                f"Negative drawn from the query bucket {self.query_bucket} "
                f"(query report {self.query_report})"
            )
        if len(self.negatives) != len(self.negative_reports):
            raise ValueError("negatives and negative_reports differ in length")

    @property
    def reports(self) -> tuple[int, ...]:
        return (self.query_report, self.positive_report, *self.negative_reports)


class NegativeSampler:
    """Per-query hard-negative pools over a frozen train window.

    A query's pool holds the earlier traces of the top `candidate_pool`
    foreign buckets that the TF-IDF index scores above zero. Pools depend
    only on the data, so they are computed once and reused every epoch.
    """

    def __init__(self, train: Dataset, index: TfIdfIndex, candidate_pool: int = 50) -> None:
        if candidate_pool < 1:
            raise ValueError(f"candidate_pool must be >= 1, got {candidate_pool}")
        self.train = train
        self.index = index
        self.candidate_pool = candidate_pool
        self._timestamps = train.timestamps
        self._buckets = np.array([t.bucket_id for t in train.traces], dtype=np.int64)
        self._matrix = index.vectorize(train.traces)
        self._pools: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._ids: dict[int, tuple[int, ...]] = {}
        self.skipped: Counter[str] = Counter()

    def earlier(self, trace: StackTrace) -> int:
        """Number of train traces strictly before this one."""
        return bisect.bisect_left(self._timestamps, trace.timestamp)

    def pools(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        """(hard, fallback) positions of earlier foreign traces for the query at `position`."""
        cached = self._pools.get(position)
        if cached is not None:
            return cached

        query = self.train.traces[position]
        cut = self.earlier(query)
        foreign = np.flatnonzero(self._buckets[:cut] != query.bucket_id)
        if foreign.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            self._pools[position] = (empty, empty)
            return self._pools[position]

        scores = (self._matrix[foreign] @ self._matrix[position].T).toarray().ravel()
        bucket_ids, bucket_scores = aggregate(self._buckets[foreign], scores, "max")
        chosen = bucket_ids[bucket_scores > 0.0][: self.candidate_pool]
        in_pool = np.isin(self._buckets[foreign], chosen)
        pair = (foreign[in_pool], foreign[~in_pool])
        self._pools[position] = pair
        return pair

    def sample(self, position: int, k: int, rng: np.random.Generator) -> Optional[np.ndarray]:
        """k earlier foreign trace positions, hard ones first; None if fewer than k exist."""
        hard, fallback = self.pools(position)
        if hard.size + fallback.size < k:
            return None
        if hard.size >= k:
            return rng.choice(hard, size=k, replace=False)
        extra = self._by_bucket(fallback, k - hard.size, rng)
        return np.concatenate([hard, extra])

    def _by_bucket(self, positions: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        """n distinct positions: a uniformly random bucket first, then one of its traces.

        Each round visits every bucket with traces left once, in random order,
        so buckets repeat only after all of them were used.
        """
        _, inverse, counts = np.unique(
            self._buckets[positions], return_inverse=True, return_counts=True
        )
        order = np.argsort(inverse, kind="stable")
        groups = [list(g) for g in np.split(positions[order], np.cumsum(counts)[:-1])]
        picked: list[int] = []
        while len(picked) < n:
            live = [g for g in groups if g]
            for i in rng.permutation(len(live)):
                if len(picked) == n:
                    break
                members = live[i]
                picked.append(int(members.pop(int(rng.integers(len(members))))))
        return np.array(picked, dtype=np.int64)

    def ids(self, trace: StackTrace, vocab: Vocabulary, config: TrainConfig) -> tuple[int, ...]:
        hit = self._ids.get(trace.report_id)
        if hit is None:
            hit = tuple(config.preprocessing.ids(vocab, trace))
            self._ids[trace.report_id] = hit
        return hit


def build_groups(
    train: Dataset,
    vocab: Vocabulary,
    tfidf_index: TfIdfIndex,
    config: TrainConfig,
    rng: np.random.Generator,
    sampler: Optional[NegativeSampler] = None,
) -> Iterator[TrainGroup]:
    """Yield one group per eligible train report, in chronological order."""
    sampler = sampler or NegativeSampler(train, tfidf_index, config.candidate_pool)
    traces = train.traces
    seen: dict[int, list[int]] = {}  # bucket -> positions already passed

    for position, query in enumerate(traces):
        cut = sampler.earlier(query)
        members = seen.setdefault(query.bucket_id, [])
        earlier_same = [p for p in members if p < cut]
        members.append(position)
        if not earlier_same:
            sampler.skipped["no_positive"] += 1
            continue

        negs = sampler.sample(position, config.negatives_k, rng)
        if negs is None:
            sampler.skipped["no_negatives"] += 1
            log.debug("Report %d: fewer than %d foreign traces", query.report_id, config.negatives_k)
            continue

        positive = traces[earlier_same[int(rng.integers(len(earlier_same)))]]
        negatives = [traces[int(p)] for p in negs]
        yield TrainGroup(
            query=sampler.ids(query, vocab, config),
            positive=sampler.ids(positive, vocab, config),
            negatives=tuple(sampler.ids(n, vocab, config) for n in negatives),
            query_report=query.report_id,
            positive_report=positive.report_id,
            negative_reports=tuple(n.report_id for n in negatives),
            query_bucket=query.bucket_id,
            negative_buckets=tuple(n.bucket_id for n in negatives),
        )

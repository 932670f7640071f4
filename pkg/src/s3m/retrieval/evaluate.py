"""Streaming evaluation: each test query is ranked against everything before it."""

from __future__ import annotations

import bisect
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from tqdm import tqdm

from s3m.traces.models import Dataset, Split, StackTrace

from .measures import SimilarityMeasure
from .metrics import DEFAULT_KS, MetricsReport, summarize
from .ranking import RankedResult, rank_buckets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = DEFAULT_KS
    aggregation: str = "max"
    include_test_history: bool = True
    workers: int = 1
    show_progress: bool = False

    def __post_init__(self) -> None:
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError(f"ks must be positive integers, got {self.ks}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


def evaluate_stream(
    measure: SimilarityMeasure,
    stream: Dataset,
    queries: Sequence[StackTrace],
    config: Optional[EvalConfig] = None,
) -> tuple[MetricsReport, list[RankedResult]]:
    """Rank each query against the stream traces strictly before it."""
    config = config or EvalConfig()
    timestamps = stream.timestamps
    traces = stream.traces

    def run(query: StackTrace) -> RankedResult:
        cut = bisect.bisect_left(timestamps, query.timestamp)
        history = traces[:cut]
        if history and history[-1].timestamp >= query.timestamp:
            raise ValueError(f"Temporal leak while ranking query {query.report_id}")
        return rank_buckets(query, history, measure, config.aggregation, check=False)

    ordered = sorted(queries, key=lambda t: t.sort_key)
    progress = dict(total=len(ordered), disable=not config.show_progress, desc=measure.name)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(tqdm(pool.map(run, ordered), **progress))
    else:
        results = [run(q) for q in tqdm(ordered, **progress)]

    report = summarize(results, config.ks)
    log.info(
        "%s: MRR %.4f over %d queries (%d skipped)",
        measure.name,
        report.mrr,
        report.n_queries,
        report.n_skipped,
    )
    return report, results


def evaluate(
    measure: SimilarityMeasure,
    split: Split,
    config: Optional[EvalConfig] = None,
) -> tuple[MetricsReport, list[RankedResult]]:
    """Evaluate on the test window with train + validation (+ earlier test) as history."""
    config = config or EvalConfig()
    everything = split.stream(include_test=True)
    measure.prepare(everything.traces)
    stream = everything if config.include_test_history else split.stream(include_test=False)
    return evaluate_stream(measure, stream, split.test.traces, config)

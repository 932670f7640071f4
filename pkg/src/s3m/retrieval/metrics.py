"""Recall rate at k and mean reciprocal rank over ranked queries."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .ranking import RankedResult

DEFAULT_KS = (1, 5, 10)
PER_QUERY_TOP = 10


class EvaluationError(RuntimeError):
    """Raised when no query can be evaluated."""


@dataclass(frozen=True)
class MetricsReport:
    mrr: float
    rr_at: dict[int, float] = field(default_factory=dict)
    n_queries: int = 0
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "rr": {str(k): v for k, v in sorted(self.rr_at.items())},
            "n_queries": self.n_queries,
            "n_skipped": self.n_skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ranks(results: Iterable[RankedResult]) -> list[int]:
    ranks = [r.rank_of_truth for r in results if r.rank_of_truth is not None]
    if not ranks:
        raise EvaluationError("No evaluable queries: every true bucket lacks history")
    return ranks


def mrr(results: Sequence[RankedResult]) -> float:
    ranks = _ranks(results)
    return sum(1.0 / r for r in ranks) / len(ranks)


def rr_at_k(results: Sequence[RankedResult], k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranks = _ranks(results)
    return sum(1 for r in ranks if r <= k) / len(ranks)


def summarize(results: Sequence[RankedResult], ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    ranks = _ranks(results)
    return MetricsReport(
        mrr=mrr(results),
        rr_at={k: rr_at_k(results, k) for k in ks},
        n_queries=len(ranks),
        n_skipped=len(results) - len(ranks),
    )


def format_table(rows: Sequence[tuple[str, MetricsReport]], ks: Sequence[int] = DEFAULT_KS) -> str:
    """Aligned text table: Method | MRR | RR@k ..."""
    header = ["Method", "MRR"] + [f"RR@{k}" for k in ks]
    body = [
        [name, f"{rep.mrr:.3f}"] + [f"{rep.rr_at.get(k, float('nan')):.3f}" for k in ks]
        for name, rep in rows
    ]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join([first] + rest)

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in body])


def write_per_query_csv(results: Sequence[RankedResult], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["report_id", "rank_of_truth", "top_buckets"])
        for r in results:
            writer.writerow(
                [
                    r.query_id,
                    "" if r.rank_of_truth is None else r.rank_of_truth,
                    " ".join(str(b) for b in r.top(PER_QUERY_TOP)),
                ]
            )

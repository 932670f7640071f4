"""Command implementations behind the `s3m` CLI.

Each command takes the parsed arguments and the resolved RunConfig, writes
machine-readable results to stdout and returns a process exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from s3m.config import ConfigError, RunConfig
from s3m.model import bundle
from s3m.model.selftest import run_suite
from s3m.parsers.base import parse_dataset
from s3m.parsers.jsonl_parser import JsonlParser, load_split, write_split
from s3m.parsers.netbeans_parser import NetBeansParser
from s3m.retrieval.evaluate import evaluate
from s3m.retrieval.measures import NeuralMeasure, make_measure
from s3m.retrieval.metrics import MetricsReport, format_table, write_per_query_csv
from s3m.retrieval.tfidf import build_tfidf_index
from s3m.traces.models import Split
from s3m.traces.preprocess import TRIM_LABELS, TRIM_LEVELS
from s3m.traces.split import (
    NETBEANS_REFERENCE,
    compare_with_reference,
    downsample,
    summarize_split,
    time_split,
)
from s3m.training.trainer import new_model, resume, train, write_history

log = logging.getLogger(__name__)

REFERENCES = {"netbeans": NETBEANS_REFERENCE}
BASELINE_NAMES = {"prefix": "Prefix Match", "tfidf": "TF-IDF"}


def _progress() -> bool:
    return sys.stderr.isatty()


def _emit(text: str) -> None:
    sys.stdout.write(text.rstrip("\n") + "\n")


def _parse_date(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    try:
        day = datetime.strptime(value, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    except ValueError as e:
        raise ConfigError(f"start must be YYYY-MM-DD, got {value!r}") from e
    return int(day.timestamp())


def parse_levels(value: str) -> list[int]:
    """'0,2,3' -> [0, 2, 3], validated against the known trim levels."""
    try:
        levels = [int(p) for p in value.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigError(f"Trim levels must be integers, got {value!r}") from e
    if not levels:
        raise ConfigError("At least one trim level is required")
    bad = [lv for lv in levels if lv not in TRIM_LEVELS]
    if bad:
        raise ConfigError(f"Trim levels {bad} outside {TRIM_LEVELS[0]}..{TRIM_LEVELS[-1]}")
    return sorted(set(levels))


def _emit_reports(
    rows: list[tuple[str, MetricsReport]], ks: tuple[int, ...], as_json: bool
) -> None:
    if as_json:
        _emit(json.dumps({name: rep.to_dict() for name, rep in rows}, indent=2))
    else:
        _emit(format_table(rows, ks))


# ── Data ───────────────────────────────────────────────


def cmd_convert(args: argparse.Namespace, config: RunConfig) -> int:
    parser = NetBeansParser(labels_path=args.labels)
    dataset = parser.parse(Path(args.input))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    JsonlParser.write(dataset, out)
    log.info(
        "Converted %d reports in %d buckets to %s (%d skipped)",
        len(dataset),
        len(dataset.buckets),
        out,
        parser.malformed,
    )
    _emit(json.dumps({"reports": len(dataset), "buckets": len(dataset.buckets),
                      "skipped": parser.malformed}))
    return 0


def cmd_prepare(args: argparse.Namespace, config: RunConfig) -> int:
    dataset = parse_dataset(Path(args.input), args.format)
    if args.downsample:
        dataset = downsample(dataset, args.downsample, args.min_bucket_size, seed=config.seed)
        log.info(
            "Downsampled to %d reports in %d buckets", len(dataset), len(dataset.buckets)
        )
    split = time_split(
        dataset,
        config.train_days,
        config.val_days,
        config.test_days,
        start=_parse_date(config.start),
    )
    summary = summarize_split(split)
    if args.downsample:
        summary["downsampled"] = {"reports": len(dataset), "buckets": len(dataset.buckets)}
    if args.reference:
        summary["comparison"] = compare_with_reference(summary, REFERENCES[args.reference])
    write_split(split, Path(args.out), summary)
    log.info("Wrote split to %s", args.out)
    _emit(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ── Training and evaluation ────────────────────────────


def _train_model(split: Split, config: RunConfig, resume_from: Optional[Path] = None):
    train_config = config.train_config(show_progress=_progress())
    if resume_from is not None:
        return resume(resume_from, split, train_config)
    model = new_model(
        split,
        train_config,
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        classifier_hidden=config.classifier_hidden,
    )
    return train(model, split, train_config)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    split = load_split(Path(args.data))
    result = _train_model(split, config, Path(args.resume) if args.resume else None)
    bundle.save(result.model, Path(args.out_model))
    if args.history:
        write_history(result.history, Path(args.history))
    _emit(
        json.dumps(
            {
                "model": str(args.out_model),
                "best_epoch": result.history.best_epoch,
                "best_val_mrr": result.history.best_val_mrr,
                "final_loss": result.history.epochs[-1].mean_loss,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    model = bundle.load(Path(args.model))
    split = load_split(Path(args.data))
    report, results = evaluate(
        NeuralMeasure(model), split, config.eval_config(show_progress=_progress())
    )
    if args.per_query:
        write_per_query_csv(results, Path(args.per_query))
    label = f"S3M (trim {model.preprocessing.trim_level})"
    _emit_reports([(label, report)], config.ks, args.json)
    return 0


def _baseline(method: str, split: Split, level: int):
    # TF-IDF document frequencies come from everything before the test window
    history = split.stream(include_test=False).traces
    index = build_tfidf_index(history, level) if method == "tfidf" else None
    return make_measure(method, trim_level=level, index=index)


def cmd_baseline(args: argparse.Namespace, config: RunConfig) -> int:
    split = load_split(Path(args.data))
    levels = parse_levels(args.trims) if args.trims else [config.trim_level]
    rows = []
    for level in levels:
        measure = _baseline(args.method, split, level)
        report, _ = evaluate(measure, split, config.eval_config(show_progress=_progress()))
        rows.append((f"{BASELINE_NAMES[args.method]} (trim {level})", report))
    _emit_reports(rows, config.ks, args.json)
    return 0


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    """Train S3M, then score it and both baselines under one evaluation protocol."""
    split = load_split(Path(args.data))
    result = _train_model(split, config)
    if args.out_model:
        bundle.save(result.model, Path(args.out_model))
    level = result.model.preprocessing.trim_level
    eval_config = config.eval_config(show_progress=_progress())
    measures = [(f"S3M (trim {level})", NeuralMeasure(result.model))]
    measures += [
        (f"{BASELINE_NAMES[m]} (trim {level})", _baseline(m, split, level))
        for m in sorted(BASELINE_NAMES)
    ]
    rows = [(name, evaluate(measure, split, eval_config)[0]) for name, measure in measures]
    best = max(rows, key=lambda row: row[1].mrr)
    log.info("Best MRR: %s (%.4f)", best[0], best[1].mrr)
    _emit_reports(rows, config.ks, args.json)
    return 0


def cmd_sweep_trim(args: argparse.Namespace, config: RunConfig) -> int:
    split = load_split(Path(args.data))
    rows = []
    for level in parse_levels(args.levels):
        level_config = replace(config, trim_level=level)
        log.info("Trim level %d (%s)", level, TRIM_LABELS[level])
        result = _train_model(split, level_config)
        report, _ = evaluate(
            NeuralMeasure(result.model), split, level_config.eval_config(_progress())
        )
        rows.append((f"S3M trim {level} ({TRIM_LABELS[level]})", report))
    _emit_reports(rows, config.ks, args.json)
    return 0


# ── Self-test ──────────────────────────────────────────


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    reports = run_suite(
        seeds=args.seeds,
        base_seed=config.seed,
        tolerance=args.tolerance,
        inject_fault=args.inject_fault,
    )
    failed = [r for r in reports if not r.passed]
    worst = max(reports, key=lambda r: r.max_rel_error)
    _emit(
        json.dumps(
            {
                "passed": not failed,
                "checks": len(reports),
                "failed": [r.to_dict() for r in failed[:20]],
                "worst": worst.to_dict(),
                "tolerance": args.tolerance,
            },
            indent=2,
        )
    )
    if failed:
        log.error("%d of %d gradient checks failed", len(failed), len(reports))
        return 1
    log.info("All %d gradient checks passed", len(reports))
    return 0

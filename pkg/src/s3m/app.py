"""s3m - stack trace similarity for crash report deduplication."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from s3m import commands
from s3m.config import RunConfig, load_config
from s3m.retrieval.ranking import AGGREGATIONS
from s3m.traces.preprocess import TRIM_LEVELS

log = logging.getLogger("s3m")

_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _ks(value: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(p) for p in value.split(",") if p.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from e
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"ks must be positive integers, got {value!r}")
    return ks


def _enable(parser: argparse.ArgumentParser, flag: str, dest: str, help: str) -> None:
    # None means "not given", so config-file values survive
    parser.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=help)


def _add_eval_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ks", type=_ks, help="Cutoffs for RR@k, e.g. 1,5,10")
    parser.add_argument("--aggregation", choices=AGGREGATIONS, help="Trace-to-bucket score rule")
    parser.add_argument(
        "--no-test-history",
        dest="include_test_history",
        action="store_const",
        const=False,
        default=None,
        help="Exclude earlier test-window traces from the candidate history",
    )
    parser.add_argument("--workers", type=int, help="Evaluate queries on N threads")
    parser.add_argument("--json", action="store_true", help="Print metrics as JSON")


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trim", dest="trim_level", type=int, choices=TRIM_LEVELS)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--max-len", dest="max_len", type=int)
    _enable(parser, "--collapse-recursion", "collapse_recursion", "Merge runs of identical frames")
    parser.add_argument("--embed-dim", dest="embed_dim", type=int)
    parser.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    parser.add_argument("--classifier-hidden", dest="classifier_hidden", type=int)
    parser.add_argument("--negatives", dest="negatives_k", type=int)
    parser.add_argument("--candidate-pool", dest="candidate_pool", type=int)
    parser.add_argument("--clip-norm", dest="clip_norm", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s3m", description="Siamese biLSTM stack trace similarity for crash deduplication"
    )
    parser.add_argument("--config", type=Path, help="JSON file whose keys mirror the flags")
    parser.add_argument("--env", type=Path, help=".env file with S3M_* defaults")
    parser.add_argument("--log-file", dest="log_path", type=Path, help="Also log to this file")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="Convert the NetBeans corpus to JSON lines")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--labels", type=Path, help="CSV of id,dup_id")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=commands.cmd_convert)

    p = sub.add_parser("prepare", help="Time-split a dataset into train/validation/test")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--format", default="jsonl", choices=("jsonl", "netbeans"))
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--train-days", dest="train_days", type=int)
    p.add_argument("--val-days", dest="val_days", type=int)
    p.add_argument("--test-days", dest="test_days", type=int)
    p.add_argument("--start", help="Window start, YYYY-MM-DD (UTC)")
    p.add_argument("--reference", choices=sorted(commands.REFERENCES))
    p.add_argument("--downsample", type=int, metavar="N",
                   help="Keep random whole buckets until N reports")
    p.add_argument("--min-bucket-size", dest="min_bucket_size", type=int, default=2,
                   help="Smallest bucket --downsample may keep")
    p.set_defaults(func=commands.cmd_prepare)

    p = sub.add_parser("train", help="Train an S3M model")
    p.add_argument("--data", required=True, type=Path, help="Directory written by prepare")
    _add_model_options(p)
    p.add_argument("--out-model", dest="out_model", required=True, type=Path)
    p.add_argument("--history", type=Path, help="Per-epoch history as JSON lines")
    p.add_argument("--resume", type=Path, help="Continue from this bundle")
    p.set_defaults(func=commands.cmd_train)

    p = sub.add_parser("eval", help="Evaluate a trained model on the test window")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    _add_eval_options(p)
    p.add_argument("--per-query", dest="per_query", type=Path, help="Per-query CSV")
    p.set_defaults(func=commands.cmd_eval)

    p = sub.add_parser("baseline", help="Evaluate a classic similarity baseline")
    p.add_argument("--method", required=True, choices=sorted(commands.BASELINE_NAMES))
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--trim", dest="trims", help="Trim level or comma list, e.g. 0,1,2,3")
    _add_eval_options(p)
    p.set_defaults(func=commands.cmd_baseline)

    p = sub.add_parser("compare", help="Train S3M and evaluate it against both baselines")
    p.add_argument("--data", required=True, type=Path)
    _add_model_options(p)
    _add_eval_options(p)
    p.add_argument("--out-model", dest="out_model", type=Path, help="Also save the trained bundle")
    p.set_defaults(func=commands.cmd_compare)

    p = sub.add_parser("sweep-trim", help="Train and evaluate once per trim level")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--levels", default="0,1,2,3")
    _add_model_options(p)
    _add_eval_options(p)
    p.set_defaults(func=commands.cmd_sweep_trim)

    p = sub.add_parser("gradcheck", help="Finite-difference check of every gradient")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=20, help="Random instances per op")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--inject-fault", dest="inject_fault", action="store_true",
                   help="Corrupt one analytic gradient; the check must fail")
    p.set_defaults(func=commands.cmd_gradcheck)
    return parser


def _setup_logging(config: RunConfig, verbose: bool = False) -> None:
    formatter = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    root = logging.getLogger("s3m")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.DEBUG)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    console.setFormatter(formatter)
    root.addHandler(console)

    if config.log_path:
        config.log_path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(config.log_path, encoding="utf-8")
        handler.setFormatter(formatter)
        root.addHandler(handler)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    try:
        config = load_config(args.config, args.env, overrides)
        _setup_logging(config, args.verbose)
        log.info("Resolved config: %s", config.to_json())
        return args.func(args, config)
    except (ValueError, RuntimeError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

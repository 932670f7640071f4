"""RankNet training of the S3M model with Adam and validation-MRR model selection."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from s3m.autodiff import tensor as T
from s3m.autodiff.optim import adam_step
from s3m.autodiff.tensor import Tape, Tensor
from s3m.model import bundle
from s3m.model.bundle import S3MModel
from s3m.model.network import ModelConfig, S3MParams, encode_trace, features, init, similarity
from s3m.retrieval.evaluate import EvalConfig, evaluate_stream
from s3m.retrieval.measures import NeuralMeasure
from s3m.retrieval.metrics import EvaluationError
from s3m.retrieval.tfidf import build_tfidf_index
from s3m.traces.models import Split
from s3m.traces.preprocess import DEFAULT_MAX_LEN, Preprocessing

from .sampling import NegativeSampler, TrainGroup, build_groups

log = logging.getLogger(__name__)

Score = Union[Tensor, float]


class TrainingError(RuntimeError):
    """Raised when training cannot start or diverges."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 10
    seed: int = 0
    trim_level: int = 0
    max_len: int = DEFAULT_MAX_LEN
    negatives_k: int = 4
    candidate_pool: int = 50
    collapse_recursion: bool = False
    clip_norm: Optional[float] = None
    show_progress: bool = False

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.negatives_k < 1:
            raise ValueError(f"negatives_k must be >= 1, got {self.negatives_k}")
        if self.candidate_pool < 1:
            raise ValueError(f"candidate_pool must be >= 1, got {self.candidate_pool}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")
        self.preprocessing  # validates trim_level and max_len

    @property
    def preprocessing(self) -> Preprocessing:
        return Preprocessing(self.trim_level, self.max_len, self.collapse_recursion)


# ── Loss ───────────────────────────────────────────────


def ranknet_loss(s_pos: Score, s_negs: Sequence[Score]) -> Score:
    """Sum over negatives of log(1 + exp(s_neg - s_pos)).

    Returns a Tensor when any score is a Tensor, else a float.
    """
    if not s_negs:
        raise ValueError("ranknet_loss needs at least one negative")
    if not isinstance(s_pos, Tensor) and not any(isinstance(s, Tensor) for s in s_negs):
        diffs = np.asarray(s_negs, dtype=np.float64) - float(s_pos)
        return float(np.sum(np.logaddexp(0.0, diffs)))

    pos = s_pos if isinstance(s_pos, Tensor) else T.constant(s_pos)
    loss: Optional[Tensor] = None
    for s in s_negs:
        neg = s if isinstance(s, Tensor) else T.constant(s)
        term = T.softplus(T.sub(neg, pos))
        loss = term if loss is None else T.add(loss, term)
    return T.total(loss)


def group_scores(params: S3MParams, group: TrainGroup) -> tuple[Tensor, list[Tensor]]:
    """Score the positive and every negative against the query, encoding the query once."""
    query = encode_trace(params, group.query)
    pos = similarity(params, features(query, encode_trace(params, group.positive)))
    negs = [similarity(params, features(query, encode_trace(params, n))) for n in group.negatives]
    return pos, negs


def group_loss(params: S3MParams, group: TrainGroup) -> Tensor:
    pos, negs = group_scores(params, group)
    return ranknet_loss(pos, negs)


# ── History ────────────────────────────────────────────


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    val_mrr: Optional[float]
    n_groups: int = 0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_loss": self.mean_loss,
            "val_mrr": self.val_mrr,
            "n_groups": self.n_groups,
        }


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def best_val_mrr(self) -> Optional[float]:
        for rec in self.epochs:
            if rec.epoch == self.best_epoch:
                return rec.val_mrr
        return None


@dataclass
class TrainingResult:
    model: S3MModel
    history: TrainingHistory


def write_history(history: TrainingHistory, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in history.epochs:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    log.info("Wrote training history to %s", path)


# ── Training loop ──────────────────────────────────────


def new_model(
    split: Split,
    config: TrainConfig,
    embed_dim: int = 50,
    hidden_dim: int = 100,
    classifier_hidden: int = 200,
) -> S3MModel:
    """Fresh model whose vocabulary comes from the train window."""
    preprocessing = config.preprocessing
    vocab = preprocessing.build_vocab(split.train)
    model_config = ModelConfig(
        vocab_size=len(vocab),
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        classifier_hidden=classifier_hidden,
        seed=config.seed,
    )
    log.info("Vocabulary: %d tokens at trim level %d", len(vocab) - 2, config.trim_level)
    return S3MModel(params=init(model_config), vocab=vocab, preprocessing=preprocessing)


def _check_model(model: S3MModel, split: Split, config: TrainConfig) -> None:
    if model.preprocessing.trim_level != config.trim_level:
        raise TrainingError(
            f"Model uses trim level {model.preprocessing.trim_level}, "
            f"training asked for {config.trim_level}"
        )
    if model.vocab.trim_level != config.trim_level:
        raise TrainingError(
            f"Vocabulary was built at trim level {model.vocab.trim_level}, "
            f"training asked for {config.trim_level}"
        )
    expected = model.preprocessing.build_vocab(split.train)
    if expected.tokens != model.vocab.tokens:
        raise TrainingError(
            f"Model vocabulary ({len(model.vocab)} ids) was not built from this "
            f"train window ({len(expected)} ids)"
        )


def validation_mrr(model: S3MModel, split: Split) -> Optional[float]:
    """MRR over validation queries with train + earlier validation as history."""
    if len(split.validation) == 0:
        return None
    measure = NeuralMeasure(model)
    stream = split.train.merged(split.validation)
    measure.prepare(stream.traces)
    try:
        report, _ = evaluate_stream(measure, stream, split.validation.traces, EvalConfig(ks=(1,)))
    except EvaluationError:
        log.warning("Validation window has no evaluable query")
        return None
    return report.mrr


def _step(model: S3MModel, group: TrainGroup, config: TrainConfig) -> float:
    store = model.params.store
    with Tape() as tape:
        loss = group_loss(model.params, group)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(
                f"Non-finite loss {value} on group query={group.query_report} "
                f"positive={group.positive_report} negatives={list(group.negative_reports)}"
            )
        tape.backward(loss)
    if config.clip_norm is not None:
        store.clip_grad_norm(config.clip_norm)
    adam_step(store, config.lr)
    return value


def train(
    model: S3MModel,
    split: Split,
    config: TrainConfig,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
    start_epoch: int = 1,
) -> TrainingResult:
    """Train end to end; the returned model holds the best-validation weights."""
    _check_model(model, split, config)
    rng = np.random.default_rng(config.seed)
    index = build_tfidf_index(split.train.traces, config.trim_level)
    sampler = NegativeSampler(split.train, index, config.candidate_pool)
    store = model.params.store
    history = TrainingHistory()
    best: Optional[tuple[float, int, dict[str, np.ndarray]]] = None

    for epoch in range(start_epoch, start_epoch + config.epochs):
        sampler.skipped.clear()
        groups = list(build_groups(split.train, model.vocab, index, config, rng, sampler))
        if not groups:
            raise TrainingError(
                "Train window yields no training group "
                f"(skipped: {dict(sampler.skipped)})"
            )
        if sampler.skipped:
            log.info("Epoch %d: %d groups, skipped %s", epoch, len(groups), dict(sampler.skipped))

        losses = []
        order = rng.permutation(len(groups))
        for i in tqdm(order, desc=f"epoch {epoch}", disable=not config.show_progress):
            losses.append(_step(model, groups[int(i)], config))
        history.step_losses.extend(losses)

        val = validation_mrr(model, split)
        record = EpochRecord(epoch, float(np.mean(losses)), val, len(groups))
        history.epochs.append(record)
        log.info(
            "Epoch %d: mean loss %.4f, validation MRR %s",
            epoch,
            record.mean_loss,
            "n/a" if val is None else f"{val:.4f}",
        )
        if val is not None and (best is None or val > best[0]):
            best = (val, epoch, store.snapshot())
        if on_epoch is not None:
            on_epoch(record)

    if best is not None:
        store.restore(best[2])
        history.best_epoch = best[1]
    else:
        history.best_epoch = history.epochs[-1].epoch

    model.metadata.update(
        {
            "epochs_trained": history.epochs[-1].epoch,
            "best_epoch": history.best_epoch,
            "best_val_mrr": history.best_val_mrr,
            "seed": config.seed,
            "lr": config.lr,
            "negatives_k": config.negatives_k,
            "candidate_pool": config.candidate_pool,
        }
    )
    return TrainingResult(model, history)


def resume(
    checkpoint_path: Path,
    split: Split,
    config: TrainConfig,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainingResult:
    """Continue training from a bundle. Adam moments are not stored, so they restart at zero."""
    model = bundle.load(checkpoint_path)
    if model.preprocessing.trim_level != config.trim_level:
        raise TrainingError(
            f"Checkpoint was trained with trim level {model.preprocessing.trim_level}, "
            f"resume asked for {config.trim_level}"
        )
    config = replace(
        config,
        max_len=model.preprocessing.max_len,
        collapse_recursion=model.preprocessing.collapse_recursion,
    )
    model.params.store.reset_optimizer()
    log.warning("Resuming from %s with a fresh optimizer state", checkpoint_path)
    start = int(model.metadata.get("epochs_trained", 0)) + 1
    return train(model, split, config, on_epoch=on_epoch, start_epoch=start)

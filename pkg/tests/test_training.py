"""Tests for group sampling, the RankNet loss and the training loop."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from s3m.autodiff import tensor as T
from s3m.autodiff.gradcheck import gradcheck
from s3m.model import bundle
from s3m.model.network import ModelConfig, init
from s3m.retrieval.evaluate import evaluate_stream
from s3m.retrieval.measures import NeuralMeasure
from s3m.retrieval.tfidf import build_tfidf_index
from s3m.traces.models import Dataset, Split, StackTrace
from s3m.traces.preprocess import build_vocab
from s3m.traces.split import time_split
from s3m.training.sampling import NegativeSampler, build_groups
from s3m.training.trainer import (
    TrainConfig,
    TrainingError,
    group_loss,
    new_model,
    ranknet_loss,
    resume,
    train,
    write_history,
)


def _t(report_id, bucket_id, timestamp, names) -> StackTrace:
    return StackTrace.from_names(report_id, bucket_id, timestamp, names)


def _train_only(ds: Dataset) -> Split:
    return Split(train=ds, validation=Dataset(()), test=Dataset(()), boundaries=(0, 0))


def _groups(ds: Dataset, config: TrainConfig, seed: int = 0):
    index = build_tfidf_index(ds.traces, config.trim_level)
    vocab = build_vocab(ds, config.trim_level)
    return list(build_groups(ds, vocab, index, config, np.random.default_rng(seed)))


# ── RankNet loss ───────────────────────────────────


class TestRankNetLoss:
    def test_tie(self):
        assert ranknet_loss(0.3, [0.3] * 4) == pytest.approx(4 * math.log(2))

    def test_hand_case(self):
        expected = 2 * math.log1p(math.e**-1) + math.log1p(math.e) + math.log1p(math.e**-2)
        assert ranknet_loss(1.0, [0.0, 0.0, 2.0, -1.0]) == pytest.approx(expected)
        assert expected == pytest.approx(2.0667, abs=1e-4)

    def test_limit_and_overflow_safety(self):
        assert ranknet_loss(1e4, [0.0] * 4) == 0.0
        assert ranknet_loss(-1e4, [0.0]) == pytest.approx(1e4)

    def test_decreasing_in_positive(self):
        values = [ranknet_loss(s, [0.5, -0.2, 1.0, 0.0]) for s in np.linspace(-3, 3, 13)]
        assert all(v >= 0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_tensor_path_matches_float_path(self):
        negs = [0.0, 0.0, 2.0, -1.0]
        loss = ranknet_loss(T.constant(1.0), [T.constant(s) for s in negs])
        assert loss.item() == pytest.approx(ranknet_loss(1.0, negs))

    def test_needs_negatives(self):
        with pytest.raises(ValueError):
            ranknet_loss(1.0, [])

    def test_gradcheck_through_score_pair(self, toy_dataset: Dataset):
        config = TrainConfig(negatives_k=2)
        group = _groups(toy_dataset, config)[0]
        vocab = build_vocab(toy_dataset, 0)
        model_config = ModelConfig(vocab_size=len(vocab), embed_dim=3, hidden_dim=3, classifier_hidden=4)
        params = init(model_config)
        report = gradcheck(lambda s: group_loss(params, group), params.store, max_coords=10)
        assert report.passed, report.to_dict()


# ── Groups ─────────────────────────────────────────


class TestBuildGroups:
    def test_first_report_of_bucket_never_a_query(self, toy_dataset: Dataset):
        groups = _groups(toy_dataset, TrainConfig())
        firsts = {ids[0] for ids in toy_dataset.buckets.values()}
        assert not firsts & {g.query_report for g in groups}

    def test_invariants_hold_exhaustively(self, toy_dataset: Dataset):
        by_id = {t.report_id: t for t in toy_dataset}
        for seed in range(10):
            for g in _groups(toy_dataset, TrainConfig(), seed):
                query = by_id[g.query_report]
                positive = by_id[g.positive_report]
                assert positive.bucket_id == query.bucket_id
                assert positive.timestamp < query.timestamp
                assert len(g.negatives) == 4
                for rid in g.negative_reports:
                    neg = by_id[rid]
                    assert neg.bucket_id != query.bucket_id
                    assert neg.timestamp < query.timestamp

    def test_chronological(self, toy_dataset: Dataset):
        order = [t.report_id for t in toy_dataset]
        queries = [g.query_report for g in _groups(toy_dataset, TrainConfig())]
        assert queries == sorted(queries, key=order.index)

    def test_negatives_from_tfidf_closest_bucket(self):
        traces = [_t(1, 1, 0, ["shared.S.x", "a.A.x"])]
        traces += [_t(10 + i, 2, 1 + i, ["shared.S.x", f"b.B.x{i}"]) for i in range(5)]
        traces += [_t(20 + i, 3, 10 + i, [f"c.C.x{i}"]) for i in range(5)]
        traces.append(_t(99, 1, 50, ["shared.S.x", "a.A.x"]))
        ds = Dataset(tuple(traces))
        for seed in range(5):
            group = next(g for g in _groups(ds, TrainConfig(), seed) if g.query_report == 99)
            assert set(group.negative_buckets) == {2}
            assert group.positive_report == 1

    def test_small_pool_topped_up_with_random(self):
        traces = [_t(1, 1, 0, ["shared.S.x", "a.A.x"])]
        traces += [_t(10 + i, 2, 1 + i, ["shared.S.x", f"b.B.x{i}"]) for i in range(2)]
        traces += [_t(20 + i, 3, 10 + i, [f"c.C.x{i}"]) for i in range(3)]
        traces.append(_t(99, 1, 50, ["shared.S.x", "a.A.x"]))
        ds = Dataset(tuple(traces))
        group = next(g for g in _groups(ds, TrainConfig()) if g.query_report == 99)
        assert sorted(group.negative_buckets) == [2, 2, 3, 3]
        assert len(set(group.negative_reports)) == 4

    def test_random_top_up_is_uniform_over_buckets(self):
        # bucket 2 is large, buckets 3..5 are singletons; no foreign bucket shares a term
        traces = [_t(1, 1, 0, ["a.A.x"])]
        traces += [_t(10 + i, 2, 1 + i, [f"b.B.x{i}"]) for i in range(12)]
        traces += [_t(30 + b, b, 20 + b, [f"c{b}.C.x"]) for b in (3, 4, 5)]
        traces.append(_t(99, 1, 50, ["a.A.x"]))
        ds = Dataset(tuple(traces))
        config = TrainConfig(negatives_k=3)
        for seed in range(20):
            group = next(g for g in _groups(ds, config, seed) if g.query_report == 99)
            assert len(set(group.negative_buckets)) == 3

    def test_too_few_foreign_traces_skipped(self):
        ds = Dataset(
            (
                _t(1, 1, 0, ["a"]),
                _t(2, 2, 1, ["b"]),
                _t(3, 1, 2, ["a"]),
            )
        )
        index = build_tfidf_index(ds.traces, 0)
        sampler = NegativeSampler(ds, index)
        groups = list(
            build_groups(
                ds, build_vocab(ds, 0), index, TrainConfig(), np.random.default_rng(0), sampler
            )
        )
        assert groups == []
        assert sampler.skipped["no_negatives"] == 1
        assert sampler.skipped["no_positive"] == 2


# ── Training loop ──────────────────────────────────


class TestTrain:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(negatives_k=0)
        with pytest.raises(ValueError):
            TrainConfig(trim_level=4)

    def test_toy_set_is_learned(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        config = TrainConfig(lr=1e-2, epochs=30, seed=0)
        model = new_model(split, config, **small_dims)
        result = train(model, split, config)

        first_step = result.history.step_losses[0]
        assert abs(first_step - 4 * math.log(2)) < 0.5
        windows = [np.mean(result.history.step_losses[i : i + 10]) for i in range(0, 100, 10)]
        assert windows[-1] < windows[0]

        report, _ = evaluate_stream(NeuralMeasure(result.model), toy_dataset, toy_dataset.traces)
        assert report.mrr == 1.0
        assert report.n_queries == 15

    def test_deterministic(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        config = TrainConfig(lr=1e-2, epochs=2, seed=4)
        runs = [train(new_model(split, config, **small_dims), split, config) for _ in range(2)]
        assert runs[0].history.step_losses == runs[1].history.step_losses
        assert bundle.to_bytes(runs[0].model) == bundle.to_bytes(runs[1].model)

    def test_validation_selects_best_epoch(self, toy_dataset: Dataset, small_dims):
        split = time_split(toy_dataset, 12, 3, 5)
        config = TrainConfig(lr=1e-2, epochs=3, seed=1)
        records = []
        result = train(new_model(split, config, **small_dims), split, config, on_epoch=records.append)
        assert [r.epoch for r in records] == [1, 2, 3]
        assert all(r.val_mrr is not None for r in records)
        best = max(records, key=lambda r: (r.val_mrr, -r.epoch))
        assert result.history.best_epoch == best.epoch
        assert result.model.metadata["best_val_mrr"] == best.val_mrr

    def test_no_validation_keeps_latest(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        config = TrainConfig(epochs=2)
        result = train(new_model(split, config, **small_dims), split, config)
        assert [r.val_mrr for r in result.history.epochs] == [None, None]
        assert result.history.best_epoch == 2

    def test_zero_groups_fatal(self, small_dims):
        ds = Dataset(tuple(_t(i, i, i, [f"x.X.m{i}"]) for i in range(5)))
        split = _train_only(ds)
        config = TrainConfig(epochs=1)
        with pytest.raises(TrainingError, match="no training group"):
            train(new_model(split, config, **small_dims), split, config)

    def test_non_finite_loss_names_group(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        config = TrainConfig(epochs=1)
        model = new_model(split, config, **small_dims)
        model.params["cls.b2"].value[0] = np.nan
        with pytest.raises(TrainingError, match=r"query=\d+ positive=\d+"):
            train(model, split, config)

    def test_vocab_from_other_data_rejected(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        other = _train_only(Dataset(toy_dataset.traces[:3]))
        config = TrainConfig(epochs=1)
        with pytest.raises(TrainingError, match="vocabulary"):
            train(new_model(other, config, **small_dims), split, config)

    def test_clip_norm_runs(self, toy_dataset: Dataset, small_dims):
        split = _train_only(toy_dataset)
        config = TrainConfig(epochs=1, clip_norm=0.5)
        result = train(new_model(split, config, **small_dims), split, config)
        assert all(math.isfinite(v) for v in result.history.step_losses)


class TestResume:
    def _checkpoint(self, split: Split, dims, tmp_path: Path) -> Path:
        config = TrainConfig(lr=1e-2, epochs=1, seed=2)
        result = train(new_model(split, config, **dims), split, config)
        path = tmp_path / "ckpt.s3m"
        bundle.save(result.model, path)
        return path

    def test_continues(self, toy_dataset: Dataset, small_dims, tmp_path: Path):
        split = _train_only(toy_dataset)
        path = self._checkpoint(split, small_dims, tmp_path)
        result = resume(path, split, TrainConfig(lr=1e-2, epochs=1, seed=2))
        assert [r.epoch for r in result.history.epochs] == [2]
        assert all(math.isfinite(v) for v in result.history.step_losses)
        assert result.model.metadata["epochs_trained"] == 2

    def test_wrong_trim_level(self, toy_dataset: Dataset, small_dims, tmp_path: Path):
        split = _train_only(toy_dataset)
        path = self._checkpoint(split, small_dims, tmp_path)
        with pytest.raises(TrainingError, match="trim level"):
            resume(path, split, TrainConfig(trim_level=1))

    def test_close_to_uninterrupted_run(self, toy_dataset: Dataset, small_dims, tmp_path: Path):
        split = _train_only(toy_dataset)
        path = self._checkpoint(split, small_dims, tmp_path)
        resumed = resume(path, split, TrainConfig(lr=1e-2, epochs=1, seed=2))
        config = TrainConfig(lr=1e-2, epochs=2, seed=2)
        fresh = train(new_model(split, config, **small_dims), split, config)
        a = resumed.history.epochs[-1].mean_loss
        b = fresh.history.epochs[-1].mean_loss
        assert a != b
        assert a == pytest.approx(b, rel=0.5)


class TestHistoryFile:
    def test_jsonl(self, toy_dataset: Dataset, small_dims, tmp_path: Path):
        split = _train_only(toy_dataset)
        config = TrainConfig(epochs=2)
        result = train(new_model(split, config, **small_dims), split, config)
        path = tmp_path / "h.jsonl"
        write_history(result.history, path)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["epoch"] for r in lines] == [1, 2]
        assert set(lines[0]) >= {"epoch", "mean_loss", "val_mrr"}

"""Tests for tensors, the tape, Adam and the gradient checker."""

from __future__ import annotations

import numpy as np
import pytest

from s3m.autodiff import tensor as T
from s3m.autodiff.gradcheck import gradcheck, relative_error
from s3m.autodiff.optim import ParamStore, adam_step
from s3m.autodiff.tensor import ShapeError, Tape, Tensor


def _store(**values) -> ParamStore:
    store = ParamStore()
    for name, value in values.items():
        store.add(name, np.asarray(value, dtype=np.float64))
    return store


# ── Forward ────────────────────────────────────────


class TestOps:
    def test_relu(self):
        assert T.relu(T.constant([-1.0, 0.0, 2.0])).value.tolist() == [0.0, 0.0, 2.0]

    def test_hadamard_identity(self):
        v = T.constant([1.5, -2.0, 3.0])
        assert T.hadamard(v, T.constant(np.ones(3))).value.tolist() == [1.5, -2.0, 3.0]

    def test_commutative_bit_exact(self):
        rng = np.random.default_rng(1)
        a, b = T.constant(rng.normal(size=50)), T.constant(rng.normal(size=50))
        assert np.array_equal(T.add(a, b).value, T.add(b, a).value)
        assert np.array_equal(T.hadamard(a, b).value, T.hadamard(b, a).value)

    def test_matvec_and_concat(self):
        w = T.constant([[1.0, 2.0], [3.0, 4.0]])
        x = T.constant([1.0, -1.0])
        assert T.matvec(w, x).value.tolist() == [-1.0, -1.0]
        assert T.concat(x, x).value.tolist() == [1.0, -1.0, 1.0, -1.0]

    def test_sigmoid_and_softplus_are_stable(self):
        x = T.constant([-1000.0, 0.0, 1000.0])
        assert T.sigmoid(x).value.tolist() == pytest.approx([0.0, 0.5, 1.0])
        assert T.softplus(x).value.tolist() == pytest.approx([0.0, np.log(2.0), 1000.0])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(3,\) vs \(2,\)"):
            T.add(T.constant(np.zeros(3)), T.constant(np.zeros(2)))
        with pytest.raises(ShapeError, match=r"W\(2, 3\).*x\(2,\)"):
            T.matvec(T.constant(np.zeros((2, 3))), T.constant(np.zeros(2)))

    def test_row_out_of_range(self):
        with pytest.raises(IndexError):
            T.row(T.constant(np.zeros((3, 2))), 3)

    def test_rank_three_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 2, 2)))

    def test_no_recording_outside_tape(self):
        store = _store(x=[1.0, 2.0])
        out = T.hadamard(store["x"], store["x"])
        assert not out.requires_grad


# ── Backward ───────────────────────────────────────


class TestBackward:
    def test_sum_of_squares(self):
        store = _store(x=[1.0, 2.0])
        with Tape() as tape:
            loss = T.total(T.hadamard(store["x"], store["x"]))
            tape.backward(loss)
        assert store["x"].grad.tolist() == [2.0, 4.0]

    def test_twice_doubles(self):
        store = _store(x=[1.0, 2.0])
        with Tape() as tape:
            loss = T.total(T.hadamard(store["x"], store["x"]))
            tape.backward(loss)
            tape.backward(loss)
        assert store["x"].grad.tolist() == [4.0, 8.0]

    def test_constant_loss_leaves_zero_grads(self):
        store = _store(x=[1.0, 2.0])
        with Tape() as tape:
            loss = T.total(T.constant([3.0, 4.0]))
            tape.backward(loss)
        assert store["x"].grad.tolist() == [0.0, 0.0]

    def test_non_scalar_loss(self):
        store = _store(x=[1.0, 2.0])
        with Tape() as tape:
            out = T.scale(store["x"], 2.0)
            with pytest.raises(ShapeError, match="scalar"):
                tape.backward(out)

    def test_backward_needs_tape(self):
        with pytest.raises(RuntimeError):
            T.backward(T.constant(1.0))

    def test_row_gradient_touches_one_row(self):
        store = _store(table=np.arange(6.0).reshape(3, 2))
        with Tape() as tape:
            r = T.row(store["table"], 1)
            loss = T.total(T.add(r, T.row(store["table"], 1)))
            tape.backward(loss)
        assert store["table"].grad.tolist() == [[0.0, 0.0], [2.0, 2.0], [0.0, 0.0]]

    def test_shared_subexpression(self):
        store = _store(x=[3.0])
        with Tape() as tape:
            y = T.tanh(store["x"])
            loss = T.total(T.add(y, T.hadamard(y, y)))
            tape.backward(loss)
        t = np.tanh(3.0)
        assert store["x"].grad[0] == pytest.approx((1 + 2 * t) * (1 - t * t))


# ── Adam ───────────────────────────────────────────


class TestAdam:
    def test_first_step_is_about_lr(self):
        store = _store(w=[0.0])
        store["w"].grad[:] = 0.37
        adam_step(store, lr=1e-3)
        assert store["w"].value[0] == pytest.approx(-1e-3, rel=1e-4)
        assert store.step == 1
        assert store["w"].grad[0] == 0.0

    def test_zero_grad_leaves_value(self):
        store = _store(w=[1.5, -2.0])
        adam_step(store, lr=0.1)
        assert store["w"].value.tolist() == [1.5, -2.0]
        assert store.step == 1

    def test_deterministic(self):
        def run() -> np.ndarray:
            store = _store(w=np.linspace(-1, 1, 5))
            for _ in range(10):
                with Tape() as tape:
                    tape.backward(T.total(T.hadamard(store["w"], store["w"])))
                adam_step(store, lr=0.05)
            return store["w"].value.copy()

        assert np.array_equal(run(), run())

    def test_clip_grad_norm(self):
        store = _store(a=[0.0], b=[0.0])
        store["a"].grad[:] = 3.0
        store["b"].grad[:] = 4.0
        assert store.clip_grad_norm(1.0) == pytest.approx(5.0)
        assert store.grad_norm() == pytest.approx(1.0)

    def test_snapshot_restore_and_reset(self):
        store = _store(w=[1.0, 2.0])
        saved = store.snapshot()
        store["w"].value += 5.0
        store.restore(saved)
        assert store["w"].value.tolist() == [1.0, 2.0]
        store["w"].grad[:] = 1.0
        adam_step(store, lr=0.1)
        store.reset_optimizer()
        m, v = store.moments("w")
        assert store.step == 0 and not m.any() and not v.any()
        with pytest.raises(ShapeError):
            store.restore({"w": np.zeros(3)})


# ── Gradient check ─────────────────────────────────


class TestGradcheck:
    def test_quadratic(self):
        store = _store(x=[0.5, -1.5, 2.0])
        report = gradcheck(lambda s: T.total(T.hadamard(s["x"], s["x"])), store)
        assert report.passed
        assert report.max_rel_error < 1e-8

    def test_matvec_random(self):
        rng = np.random.default_rng(7)
        store = _store(W=rng.normal(size=(5, 4)), x=rng.normal(size=4))
        weights = T.constant(rng.normal(size=5))
        report = gradcheck(
            lambda s: T.total(T.hadamard(T.matvec(s["W"], s["x"]), weights)), store
        )
        assert report.max_rel_error < 1e-6

    def test_lstm_step_composite(self):
        rng = np.random.default_rng(3)
        store = _store(W=rng.normal(size=(3, 5)), b=rng.normal(size=3), x=rng.normal(size=2))

        def build(s: ParamStore) -> Tensor:
            z = T.concat(s["x"], T.zeros(3))
            gate = T.sigmoid(T.add(T.matvec(s["W"], z), s["b"]))
            cand = T.tanh(T.add(T.matvec(s["W"], z), s["b"]))
            return T.total(T.hadamard(gate, T.tanh(cand)))

        assert gradcheck(build, store).max_rel_error < 1e-4

    def test_corrupted_gradient_fails(self):
        store = _store(x=[0.5, -1.5])

        def corrupt(grads):
            grads["x"][0] *= 2.0

        report = gradcheck(
            lambda s: T.total(T.hadamard(s["x"], s["x"])), store, analytic_hook=corrupt
        )
        assert not report.passed
        assert report.worst_param == "x"
        assert report.worst_index == (0,)

    def test_non_finite_fails_with_coordinate(self):
        store = _store(x=[800.0])
        report = gradcheck(lambda s: T.total(T.hadamard(s["x"], T.scale(s["x"], 1e306))), store)
        assert not report.passed
        assert "x[0]" in report.failure

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-6) == pytest.approx(1e-3)
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)

"""Gradient-check suite over every differentiable op and the full pair score."""

from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from s3m.autodiff import tensor as T
from s3m.autodiff.gradcheck import GradcheckReport, gradcheck
from s3m.autodiff.optim import ParamStore
from s3m.autodiff.tensor import Tensor

from .network import ModelConfig, init, score_pair

log = logging.getLogger(__name__)

# Small enough that a full sweep over 20 seeds stays well under a minute.
SELFTEST_CONFIG = dict(vocab_size=7, embed_dim=3, hidden_dim=4, classifier_hidden=5)


def _store(rng: np.random.Generator, **shapes: tuple[int, ...]) -> ParamStore:
    store = ParamStore()
    for name, shape in shapes.items():
        store.add(name, rng.uniform(-1.0, 1.0, size=shape))
    return store


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    """Reduce an op output to a scalar with fixed random weights."""
    return T.total(T.hadamard(out, T.constant(weights)))


def op_cases(rng: np.random.Generator) -> list[tuple[str, ParamStore, Callable[[ParamStore], Tensor]]]:
    m, n = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    w_m = rng.normal(size=m)
    w_n = rng.normal(size=n)
    w_2n = rng.normal(size=2 * n)

    cases: list[tuple[str, ParamStore, Callable[[ParamStore], Tensor]]] = []

    s = _store(rng, W=(m, n), x=(n,))
    cases.append(("matvec", s, lambda st: _weighted(T.matvec(st["W"], st["x"]), w_m)))

    for name, fn in (("add", T.add), ("sub", T.sub), ("hadamard", T.hadamard)):
        s = _store(rng, a=(n,), b=(n,))
        cases.append((name, s, lambda st, fn=fn: _weighted(fn(st["a"], st["b"]), w_n)))

    s = _store(rng, a=(n,), b=(n,))
    cases.append(("concat", s, lambda st: _weighted(T.concat(st["a"], st["b"]), w_2n)))

    c = float(rng.normal())
    s = _store(rng, a=(n,))
    cases.append(("scale", s, lambda st: _weighted(T.scale(st["a"], c), w_n)))

    for name, fn in (
        ("abs", T.abs),
        ("sigmoid", T.sigmoid),
        ("tanh", T.tanh),
        ("relu", T.relu),
        ("softplus", T.softplus),
    ):
        s = _store(rng, a=(n,))
        # keep kinks of abs/relu away from the finite-difference step
        s["a"].value[np.abs(s["a"].value) < 0.05] += 0.1
        cases.append((name, s, lambda st, fn=fn: _weighted(fn(st["a"]), w_n)))

    s = _store(rng, table=(m, n))
    idx = int(rng.integers(0, m))
    cases.append(("row", s, lambda st: _weighted(T.row(st["table"], idx), w_n)))
    return cases


def score_pair_case(seed: int) -> tuple[ParamStore, Callable[[ParamStore], Tensor]]:
    rng = np.random.default_rng(seed)
    params = init(ModelConfig(seed=seed, **SELFTEST_CONFIG))
    vocab_size = SELFTEST_CONFIG["vocab_size"]
    ids1 = [int(i) for i in rng.integers(1, vocab_size, size=3)]
    ids2 = [int(i) for i in rng.integers(1, vocab_size, size=4)]
    return params.store, lambda st: score_pair(params, ids1, ids2)


def run_suite(
    seeds: int = 20,
    base_seed: int = 0,
    tolerance: float = 1e-4,
    inject_fault: bool = False,
) -> list[GradcheckReport]:
    """Check every op and score_pair for `seeds` random instances."""
    hook: Optional[Callable[[dict[str, np.ndarray]], None]] = None
    if inject_fault:

        def hook(grads: dict[str, np.ndarray]) -> None:
            first = next(iter(grads))
            grads[first] += 0.5

    reports: list[GradcheckReport] = []
    for k in range(seeds):
        seed = base_seed + k
        rng = np.random.default_rng(seed)
        for name, store, build in op_cases(rng):
            reports.append(
                gradcheck(build, store, tolerance, rng=rng, name=f"{name}#{seed}", analytic_hook=hook)
            )
        store, build = score_pair_case(seed)
        reports.append(
            gradcheck(
                build,
                store,
                tolerance,
                rng=rng,
                max_coords=12,
                name=f"score_pair#{seed}",
                analytic_hook=hook,
            )
        )
        log.debug("gradcheck seed %d done", seed)
    return reports

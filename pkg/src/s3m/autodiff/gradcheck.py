"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .optim import ParamStore
from .tensor import Tape, Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Below this magnitude the error is measured absolutely.
ERROR_FLOOR = 1e-3

LossBuilder = Callable[[ParamStore], Tensor]
AnalyticHook = Callable[[dict[str, np.ndarray]], None]


@dataclass
class GradcheckReport:
    name: str
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    n_checked: int
    tolerance: float
    failure: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.failure is None and self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "worst": f"{self.worst_param}{list(self.worst_index)}",
            "n_checked": self.n_checked,
            "failure": self.failure,
        }


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def _loss_value(build: LossBuilder, store: ParamStore) -> float:
    return build(store).item()


def gradcheck(
    build: LossBuilder,
    store: ParamStore,
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
    max_coords: int = 40,
    rng: Optional[np.random.Generator] = None,
    name: str = "loss",
    analytic_hook: Optional[AnalyticHook] = None,
) -> GradcheckReport:
    """Compare backprop grads to central differences.

    Parameters with more than `max_coords` entries are checked on a random
    sample of coordinates. `analytic_hook` may tamper with the analytic
    gradients before comparison (used to prove the checker catches faults).
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    with Tape() as tape:
        loss = build(store)
        tape.backward(loss)
    analytic = {n: p.grad.copy() for n, p in store.items()}
    store.zero_grad()
    if analytic_hook is not None:
        analytic_hook(analytic)

    report = GradcheckReport(
        name=name,
        max_rel_error=0.0,
        worst_param="",
        worst_index=(),
        n_checked=0,
        tolerance=tolerance,
    )
    for pname, param in store.items():
        flat = param.value.reshape(-1)
        grad_flat = analytic[pname].reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

        for i in coords:
            index = tuple(int(k) for k in np.unravel_index(i, param.shape))
            original = flat[i]
            flat[i] = original + step
            f_plus = _loss_value(build, store)
            flat[i] = original - step
            f_minus = _loss_value(build, store)
            flat[i] = original

            a = float(grad_flat[i])
            if not all(math.isfinite(v) for v in (f_plus, f_minus, a)):
                report.failure = f"non-finite value at {pname}{list(index)}"
                report.worst_param, report.worst_index = pname, index
                return report

            err = relative_error(a, (f_plus - f_minus) / (2.0 * step))
            report.n_checked += 1
            if err > report.max_rel_error or not report.worst_param:
                report.max_rel_error = max(err, report.max_rel_error)
                report.worst_param, report.worst_index = pname, index
    return report

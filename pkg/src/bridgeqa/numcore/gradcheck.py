"""Gradient verification against central finite differences.

The builder passed in must be deterministic: rebuild the same graph on the
same parameter values every call (disable dropout or pin its mask).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore
from .tensor import backward

# Elementwise relative error uses a denominator floor so that noise in
# near-zero gradients is compared on an absolute 1e-4 scale instead of
# exploding.
_DENOM_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    tol: float
    max_rel_err: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)

    def summary(self) -> str:
        status = "ok" if self.passed else f"FAILED({len(self.failures)})"
        return f"grad_check {status}: worst rel err {self.worst:.3e} over {len(self.max_rel_err)} params"


def grad_check(build_loss, store: ParamStore, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients with (f(p+eps) - f(p-eps)) / (2 eps), elementwise.

    Returns a per-parameter report of max relative error; parameters above
    tol are listed as failures (nothing raises).
    """
    store.zero_grad()
    loss = build_loss(store)
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in store.items()
    }
    store.zero_grad()

    report = GradCheckReport(tol=tol)
    for name, t in store.items():
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = build_loss(store).item()
            flat[i] = orig - eps
            f_minus = build_loss(store).item()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), _DENOM_FLOOR)
        err = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
        report.max_rel_err[name] = err
        if err >= tol:
            report.failures.append(name)
    return report

"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from metsfuse.nn.tensor import Tape, Tensor

_H = 1e-5
_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    """Per-parameter worst relative errors from one grad_check run."""

    max_rel_err: float = 0.0
    worst_param: str | None = None
    per_param: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def grad_check(
    builder: Callable[[], tuple[list[Tensor], Callable[[], Tensor]]],
    h: float = _H,
) -> GradCheckReport:
    """Compare tape gradients against central differences.

    builder returns (params, loss_fn); loss_fn closes over the params and
    produces a scalar Tensor when called under a tape. Parameters with
    requires_grad=False are left alone. Relative error uses a floor of
    1e-4 in the denominator so near-zero entries compare absolutely.
    """
    params, loss_fn = builder()
    with Tape() as tape:
        loss = loss_fn()
    analytic = tape.backward(loss, params=params)

    report = GradCheckReport()
    for idx, p in enumerate(params):
        if not p.requires_grad:
            continue
        name = p.name or f"param{idx}"
        ga = analytic[p]
        worst = 0.0
        flat = p.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            hi = loss_fn().item()
            flat[j] = orig - h
            lo = loss_fn().item()
            flat[j] = orig
            numeric = (hi - lo) / (2.0 * h)
            a = ga_flat[j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), _FLOOR)
            if rel > worst:
                worst = rel
        report.per_param[name] = worst
        if worst > report.max_rel_err:
            report.max_rel_err = worst
            report.worst_param = name
    return report

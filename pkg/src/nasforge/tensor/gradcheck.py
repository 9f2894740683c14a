"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    worst: tuple = ()
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
                      tol: float = 1e-4, max_per_param: int | None = None,
                      rng: np.random.Generator | None = None,
                      floor: float = 1e-6) -> GradCheckReport:
    """Compare `f().backward()` gradients with central differences.

    Relative error per entry is |a - n| / max(|a|, |n|, floor).  With
    `max_per_param`, a seeded random subset of entries is checked.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ValueError("finite_diff_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("non-finite function value")
    out.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    rng = rng or np.random.default_rng(0)
    worst_err, worst, total = 0.0, (), 0
    per_param = {}
    for k, (p, a) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = rng.choice(flat.size, size=max_per_param, replace=False)
        p_err = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite value perturbing {p.name or k}[{i}]")
            num = (fp - fm) / (2 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            p_err = max(p_err, err)
            if err >= worst_err:
                worst_err, worst = err, (p.name or str(k), int(i), float(ana), float(num))
            total += 1
        per_param[p.name or str(k)] = p_err
    for p in params:
        p.zero_grad()
    return GradCheckReport(worst_err, tol, total, worst, per_param)

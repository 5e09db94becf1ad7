"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M


@dataclass
class GradCheckReport:
    checked: int
    tolerance: float
    max_error: float
    failures: list[tuple[str, tuple[int, ...], float, float]] = field(default_factory=list)
    covered: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def grad_check(
    plan: M.ModelPlan,
    src: np.ndarray,
    tgt: np.ndarray,
    tolerance: float = 1e-4,
    n_scalars: int = 200,
    eps: float = 1e-6,
    seed: int = 0,
    params: dict | None = None,
) -> GradCheckReport:
    """Compare backprop gradients of the teacher-forced loss with central differences.

    At least one scalar is drawn from every parameter tensor, so every layer
    kind in ``plan`` is exercised; the rest are drawn uniformly.  Error is
    ``|analytic - fd| / max(1, |fd|)``.
    """
    rng = np.random.default_rng(seed)
    if params is None:
        params = M.init_params(plan, rng, np.float64)
    if any(p.dtype != np.float64 for p in params.values()):
        raise ValueError("grad_check needs float64 parameters")
    for p in params.values():
        p.grad = None
    M.loss(plan, params, src, tgt).backward()

    names = list(params)
    picks: list[tuple[str, tuple[int, ...]]] = []
    for n in names:
        picks.append((n, tuple(int(i) for i in np.unravel_index(rng.integers(params[n].size), params[n].shape))))
    while len(picks) < n_scalars:
        n = names[int(rng.integers(len(names)))]
        picks.append((n, tuple(int(i) for i in np.unravel_index(rng.integers(params[n].size), params[n].shape))))

    def f() -> float:
        with M.ad.no_grad():
            return float(M.loss(plan, params, src, tgt).data)

    report = GradCheckReport(checked=len(picks), tolerance=tolerance, max_error=0.0, covered=names)
    for n, idx in picks:
        t = params[n]
        analytic = 0.0 if t.grad is None else float(t.grad[idx])
        orig = t.data[idx]
        t.data[idx] = orig + eps
        up = f()
        t.data[idx] = orig - eps
        down = f()
        t.data[idx] = orig
        fd = (up - down) / (2 * eps)
        err = abs(analytic - fd) / max(1.0, abs(fd))
        report.max_error = max(report.max_error, err)
        if err > tolerance:
            report.failures.append((n, idx, analytic, fd))
    return report

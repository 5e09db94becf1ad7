from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas=(0.9, 0.98),
        eps: float = 1e-9,
        clip_norm: float | None = None,
    ):
        self.params = params
        self.clip_norm = clip_norm
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        factor = 1.0
        if self.clip_norm is not None:
            norm = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in self.params if p.grad is not None)))
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * factor if factor != 1.0 else p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

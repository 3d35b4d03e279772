"""Adam with bias correction and a linear learning-rate warmup."""
from __future__ import annotations


import numpy as np


class Adam:
    """Adam optimizer over a list of :class:`~lesa.tensor.Parameter`.

    The effective learning rate on 1-based step ``t`` is
    ``lr * min(1, t / warmup_steps)`` (constant ``lr`` when ``warmup_steps`` is 0).
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8, warmup_steps: int = 0):
        if lr < 0:
            raise ValueError(f"lr must be non-negative, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def effective_lr(self, step: int) -> float:
        if self.warmup_steps and step < self.warmup_steps:
            return self.lr * step / self.warmup_steps
        return self.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ValueError(f"parameter {getattr(p, 'name', p)!r} has no gradient")
        self.step_count += 1
        t = self.step_count
        lr_t = self.effective_lr(t)
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        step_size = lr_t / c1
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if lr_t == 0.0:
                continue
            denom = np.sqrt(v / c2) + self.epsilon
            p.data -= (step_size * m / denom).astype(p.dtype, copy=False)

    def state_dict(self) -> dict:
        return {"step": self.step_count, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "epsilon": self.epsilon, "warmup_steps": self.warmup_steps}

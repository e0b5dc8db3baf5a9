"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState,
               lr: float = 5e-4, weight_decay: float = 1e-5, betas=(0.9, 0.999),
               eps: float = 1e-8, names: list[str] | None = None) -> None:
    """In-place update of ``params``; decay never enters the moment estimates."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"#{i}"
            raise FloatingPointError(f"non-finite gradient in parameter {name}; step aborted")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps) + lr * weight_decay * p
        p -= update.astype(p.dtype, copy=False)


class AdamW:
    def __init__(self, params, lr=5e-4, weight_decay=1e-5, betas=(0.9, 0.999), eps=1e-8,
                 names=None):
        self.params = list(params)
        self.names = names
        self.lr, self.weight_decay, self.betas, self.eps = lr, weight_decay, betas, eps
        self.state = OptimizerState()

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adamw_step([p.data for p in self.params], grads, self.state, self.lr,
                   self.weight_decay, self.betas, self.eps, self.names)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

"""SGD with classical momentum.

Update rule per parameter: v <- momentum*v + grad; w <- w - lr*v.
Gradients are zeroed after each step.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class SGD:
    def __init__(self, params: list[Tensor], lr: float = 1e-2, momentum: float = 0.9):
        if lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if not (0.0 <= momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                raise RuntimeError("sgd step with missing gradient; run backward first")
            np.multiply(v, self.momentum, out=v)
            v += p.grad
            p.data = p.data - self.lr * v
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> list[np.ndarray]:
        return self.velocity

    def load_state_arrays(self, arrays: list[np.ndarray]) -> None:
        if len(arrays) != len(self.velocity):
            raise ValueError("optimizer state length mismatch")
        for v, a in zip(self.velocity, arrays):
            if v.shape != a.shape:
                raise ValueError("optimizer state shape mismatch")
            v[...] = a

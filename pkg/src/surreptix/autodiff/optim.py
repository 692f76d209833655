"""SGD and Adam over plain numpy parameter dicts."""

from __future__ import annotations

import numpy as np


class SGD:
    def __init__(self, lr: float = 0.01, momentum: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.momentum = momentum
        self._vel: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            if self.momentum:
                v = self._vel.get(k)
                v = g if v is None else self.momentum * v + g
                self._vel[k] = v
                g = v
            params[k] = params[k] - self.lr * g


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def direction(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Advance the moment estimates and return the bias-corrected update."""
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for k, g in grads.items():
            m = self._m.get(k, np.zeros_like(g))
            v = self._v.get(k, np.zeros_like(g))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self._m[k], self._v[k] = m, v
            mh = m / (1 - b1 ** self._t)
            vh = v / (1 - b2 ** self._t)
            out[k] = self.lr * mh / (np.sqrt(vh) + self.eps)
        return out

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, d in self.direction(grads).items():
            params[k] = params[k] - d

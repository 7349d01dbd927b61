"""Adam with per-group learning rates and cosine decay."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adaptive-moment optimizer over named parameter groups.

    `groups` maps a group name to (params: list of arrays, lr).  Updates are
    applied in place; gradients are dense arrays matching each parameter.
    """

    def __init__(self, groups: dict, beta1=0.9, beta2=0.99, eps=1e-10,
                 total_steps: int | None = None):
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.total_steps = total_steps
        self.t = 0
        self._m = {name: [np.zeros_like(p) for p in params]
                   for name, (params, _) in groups.items()}
        self._v = {name: [np.zeros_like(p) for p in params]
                   for name, (params, _) in groups.items()}

    def lr_scale(self) -> float:
        if not self.total_steps:
            return 1.0
        frac = min(self.t / self.total_steps, 1.0)
        return 0.5 * (1.0 + np.cos(np.pi * frac))

    def step(self, grads: dict, lr_override: float | None = None) -> None:
        """grads maps group name -> list of gradient arrays."""
        self.t += 1
        scale = self.lr_scale()
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, (params, lr) in self.groups.items():
            glist = grads[name]
            lr_eff = (lr_override if lr_override is not None else lr) * scale
            for p, g, m, v in zip(params, glist, self._m[name], self._v[name]):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * np.square(g)
                p -= lr_eff * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

"""First-order optimizers acting in place on lists of numpy arrays.

Both are used for weight training and for design-space inversion. Updates
are elementwise, so rows of a batched design matrix evolve independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerSpec:
    """``name`` is ``"adam"`` or ``"sgd"``; the betas/eps only matter for Adam."""

    name: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.name!r}")

    def build(self, lr):
        if self.name == "sgd":
            return SGD(lr)
        return Adam(lr, self.beta1, self.beta2, self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads, mask=None):
        for p, g in zip(params, grads):
            if mask is None:
                p -= self.lr * g
            else:
                p[mask] -= self.lr * g[mask]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = None

    def _ensure_state(self, params):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
            # per-row step counters so that frozen rows keep their own bias correction
            self.t = [np.zeros(p.shape[:1] or (1,), dtype=np.int64) for p in params]

    def step(self, params, grads, mask=None):
        """Apply one update. ``mask`` selects the leading-axis rows to update."""
        self._ensure_state(params)
        for p, g, m, v, t in zip(params, grads, self.m, self.v, self.t):
            if mask is None:
                t += 1
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                tt = t.reshape((-1,) + (1,) * (p.ndim - 1)) if p.ndim else t[0]
                mhat = m / (1.0 - self.beta1 ** tt)
                vhat = v / (1.0 - self.beta2 ** tt)
                p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
            else:
                t[mask] += 1
                m[mask] = self.beta1 * m[mask] + (1.0 - self.beta1) * g[mask]
                v[mask] = self.beta2 * v[mask] + (1.0 - self.beta2) * (g[mask] * g[mask])
                tt = t[mask].reshape((-1,) + (1,) * (p.ndim - 1))
                mhat = m[mask] / (1.0 - self.beta1 ** tt)
                vhat = v[mask] / (1.0 - self.beta2 ** tt)
                p[mask] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

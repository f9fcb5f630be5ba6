from __future__ import annotations

import numpy as np

from .params import ParamStore


def clip_grad_norm(params: ParamStore, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((params.grad(k) ** 2).sum()) for k in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in params:
            if params[k].grad is not None:
                params[k].grad = params[k].grad * scale
    return total


class Adam:
    def __init__(self, params: ParamStore, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: ParamStore, lr: float = 1e-2):
        self.params = params
        self.lr = lr

    def step(self):
        for _, p in self.params.items():
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad


def make_optimizer(kind: str, params: ParamStore, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")

"""Minimal from-scratch optimizers: SGD, AdaGrad, Adam.

Each optimizer owns per-parameter accumulators conformal with the parameter
list it was built for and updates parameters in place.
"""

from __future__ import annotations

import numpy as np


class Sgd:
    kind = "sgd"

    def __init__(self, params, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class AdaGrad:
    kind = "adagrad"

    def __init__(self, params, lr: float, eps: float = 1e-10):
        self.lr = lr
        self.eps = eps
        self.acc = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, a in zip(params, grads, self.acc):
            a += g * g
            p -= self.lr * g / (np.sqrt(a) + self.eps)


class Adam:
    kind = "adam"

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


_KINDS = {"sgd": Sgd, "adagrad": AdaGrad, "adam": Adam}


def make_optimizer(kind: str, params, lr: float):
    if kind not in _KINDS:
        raise ValueError(f"unknown optimizer {kind!r}; pick one of {sorted(_KINDS)}")
    return _KINDS[kind](params, lr)

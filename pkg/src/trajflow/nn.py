"""Shared bits for the little fully-connected networks: parameter
initialization, the Adam optimizer, and the cosine learning-rate decay
used by both training stages."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Node, parameter

__all__ = ["init_linear", "Adam", "cosine_lr", "flatten_params", "params_close"]


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Node, Node]:
    """Weight (fan_in, fan_out) with scaled-normal init, zero bias."""
    w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
    return parameter(w), parameter(np.zeros(fan_out))


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max down to lr_min over total_steps."""
    if total_steps <= 1:
        return lr_max
    frac = min(step / (total_steps - 1), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * frac))


class Adam:
    """Plain Adam; the learning rate is passed per step so schedules live
    in the training loop."""

    def __init__(self, params: list[Node], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.value = p.value - lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def flatten_params(params: list[Node]) -> np.ndarray:
    return np.concatenate([p.value.ravel() for p in params])


def params_close(a: list[Node], b: list[Node], tol: float = 0.0) -> bool:
    fa, fb = flatten_params(a), flatten_params(b)
    if tol == 0.0:
        return bool(np.array_equal(fa, fb))
    return bool(np.allclose(fa, fb, atol=tol))

"""Adam and SGD with momentum / L2 weight decay.

The ``*_step`` functions update arrays in place and are what the tests
check against scalar recurrences; ``Optimizer`` binds one of them to a
network's parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .layers import Param


@dataclass(frozen=True)
class AdamSpec:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


@dataclass(frozen=True)
class SGDSpec:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class AdamState:
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def _check_shapes(params, grads, slots):
    if len(params) != len(grads) or len(params) != len(slots):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g, s in zip(params, grads, slots):
        if p.shape != g.shape or p.shape != s.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {s.shape}")


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, spec: AdamSpec) -> AdamState:
    _check_shapes(params, grads, state.m)
    _check_shapes(params, grads, state.v)
    state.t += 1
    b1, b2 = spec.beta1, spec.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= spec.lr * (m / c1) / (np.sqrt(v / c2) + spec.eps)
    return state


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], velocity: Sequence[np.ndarray], spec: SGDSpec):
    """v <- momentum*v - lr*(g + wd*theta); theta <- theta + v."""
    _check_shapes(params, grads, velocity)
    for p, g, v in zip(params, grads, velocity):
        v *= spec.momentum
        v -= spec.lr * (g + spec.weight_decay * p)
        p += v
    return velocity


class Optimizer:
    def __init__(self, spec: AdamSpec | SGDSpec, params: Sequence[Param]):
        self.spec = spec
        self.params = list(params)
        data = [p.data for p in self.params]
        if isinstance(spec, AdamSpec):
            self.state = AdamState.zeros_like(data)
        elif isinstance(spec, SGDSpec):
            self.state = [np.zeros_like(d) for d in data]
        else:
            raise TypeError(f"unknown optimizer spec {spec!r}")

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0

    def step(self) -> None:
        data = [p.data for p in self.params]
        grads = [p.grad for p in self.params]
        if isinstance(self.spec, AdamSpec):
            adam_step(data, grads, self.state, self.spec)
        else:
            sgd_step(data, grads, self.state, self.spec)

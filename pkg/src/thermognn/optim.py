"""SGD and Adam update rules plus the step-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .engine import ParamSet, zeros_like


def _check_shapes(params: ParamSet, grads: ParamSet):
    if list(params) != list(grads):
        raise ConfigurationError("gradient layers do not match parameters")
    for name, tensors in params.items():
        for t, arr in tensors.items():
            if t not in grads[name] or grads[name][t].shape != arr.shape:
                raise ConfigurationError(f"gradient shape mismatch at {name}.{t}")


def sgd_step(params: ParamSet, grads: ParamSet, eta: float) -> ParamSet:
    """``w <- w - eta * g`` for every tensor; returns new arrays."""
    if eta < 0:
        raise ConfigurationError("learning rate must be non-negative")
    _check_shapes(params, grads)
    return {name: {t: w - eta * grads[name][t] for t, w in tensors.items()}
            for name, tensors in params.items()}


@dataclass
class AdamState:
    m: ParamSet
    v: ParamSet
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ParamSet, **kw) -> "AdamState":
        return cls(zeros_like(params), zeros_like(params), **kw)


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState, eta: float):
    """Bias-corrected Adam. Returns ``(new_params, new_state)``."""
    if eta < 0:
        raise ConfigurationError("learning rate must be non-negative")
    _check_shapes(params, grads)
    _check_shapes(params, state.m)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name, tensors in params.items():
        new_p[name], new_m[name], new_v[name] = {}, {}, {}
        for k, w in tensors.items():
            g = grads[name][k]
            m = b1 * state.m[name][k] + (1 - b1) * g
            v = b2 * state.v[name][k] + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            new_p[name][k] = w - eta * m_hat / (np.sqrt(v_hat) + state.eps)
            new_m[name][k], new_v[name][k] = m, v
    return new_p, AdamState(new_m, new_v, t, b1, b2, state.eps)


@dataclass
class LrSchedule:
    base_eta: float = 1e-3
    decay_factor: float = 0.1
    decay_every: int = 200

    def __post_init__(self):
        if self.base_eta <= 0:
            raise ConfigurationError("base_eta must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ConfigurationError("decay_factor must be in (0, 1]")
        if self.decay_every < 1:
            raise ConfigurationError("decay_every must be >= 1")


def schedule_eta(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ConfigurationError("epoch must be >= 0")
    return schedule.base_eta * schedule.decay_factor ** (epoch // schedule.decay_every)


@dataclass
class Optimizer:
    """Small stateful wrapper so the training loop can treat both rules alike."""
    kind: str = "adam"
    state: AdamState | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.kind!r}")

    def step(self, params: ParamSet, grads: ParamSet, eta: float) -> ParamSet:
        if self.kind == "sgd":
            return sgd_step(params, grads, eta)
        if self.state is None:
            self.state = AdamState.fresh(params)
        params, self.state = adam_step(params, grads, self.state, eta)
        return params

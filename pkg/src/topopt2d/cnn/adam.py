"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InputError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameter list."""

    config: AdamConfig
    m: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    v: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params, config: AdamConfig | None = None) -> "AdamState":
        config = config or AdamConfig()
        zeros = lambda pair: (np.zeros_like(pair[0]), np.zeros_like(pair[1]))
        return cls(config, [zeros(p) for p in params], [zeros(p) for p in params])


def adam_step(state: AdamState, params, grads):
    """One Adam update; returns the new parameter list and mutates ``state``."""
    if len(grads) != len(params) or len(params) != len(state.m):
        raise InputError("params/grads/state lengths differ")
    cfg = state.config
    state.t += 1
    correction1 = 1.0 - cfg.beta1 ** state.t
    correction2 = 1.0 - cfg.beta2 ** state.t
    new_params = []
    for idx, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
        updated = []
        for slot, theta, g in ((0, w, gw), (1, b, gb)):
            m = state.m[idx][slot]
            v = state.v[idx][slot]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            m_hat = m / correction1
            v_hat = v / correction2
            updated.append(theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
        new_params.append(tuple(updated))
    return new_params, state

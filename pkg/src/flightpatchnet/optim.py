"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .nn import Parameter


@dataclass
class AdamState:
    """First/second moment buffers plus the step counter."""

    lr: float
    beta1: float
    beta2: float
    epsilon: float
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """theta <- theta - lr * m_hat / (sqrt(v_hat) + epsilon)."""

    def __init__(self, params: list[Parameter], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("parameter names are not unique")
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
        for p in self.params:
            self.state.m[p.name] = np.zeros_like(p.value.data)
            self.state.v[p.name] = np.zeros_like(p.value.data)

    def step(self) -> None:
        s = self.state
        s.step += 1
        bc1 = 1.0 - s.beta1 ** s.step
        bc2 = 1.0 - s.beta2 ** s.step
        for p in self.params:
            g = p.value.grad
            if g is None:
                raise UsageError(f"parameter {p.name!r} has no gradient; "
                                 "run backward before step")
            m = s.m[p.name]
            v = s.v[p.name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + s.epsilon)
            p.value.data = p.value.data - s.lr * update

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

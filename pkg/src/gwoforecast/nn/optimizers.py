"""The seven training optimizers, updating parameter arrays in place.

Constants sit at their usual library defaults so the hyperparameter search
only has to pick the kind and the learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMIZER_KINDS = ("SGD", "RMSprop", "Adagrad", "Adadelta", "AdamW", "Adam", "Adamax")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rho: float = 0.9  # RMSprop
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    weight_decay: float = 0.01  # AdamW only

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {OPTIMIZER_KINDS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


class Optimizer:
    def __init__(self, spec: OptimizerSpec):
        self.spec = spec
        self.t = 0
        self.state: dict[int, dict[str, np.ndarray]] = {}

    def _slot(self, i: int, p: np.ndarray) -> dict[str, np.ndarray]:
        if i not in self.state:
            self.state[i] = {"m": np.zeros_like(p), "v": np.zeros_like(p)}
        return self.state[i]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        self.t += 1
        update = getattr(self, "_" + self.spec.kind.lower())
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise ValueError(f"param {i}: shape {p.shape} vs grad {g.shape}")
            update(p, g, self._slot(i, p))

    def _sgd(self, p, g, s):
        p -= self.spec.learning_rate * g

    def _rmsprop(self, p, g, s):
        sp = self.spec
        s["v"] *= sp.rho
        s["v"] += (1.0 - sp.rho) * g * g
        p -= sp.learning_rate * g / (np.sqrt(s["v"]) + sp.eps)

    def _adagrad(self, p, g, s):
        sp = self.spec
        s["v"] += g * g
        p -= sp.learning_rate * g / (np.sqrt(s["v"]) + sp.eps)

    def _adadelta(self, p, g, s):
        # "m" holds the running average of squared updates.
        sp = self.spec
        rho, eps = sp.adadelta_rho, sp.adadelta_eps
        s["v"] *= rho
        s["v"] += (1.0 - rho) * g * g
        delta = np.sqrt(s["m"] + eps) / np.sqrt(s["v"] + eps) * g
        s["m"] *= rho
        s["m"] += (1.0 - rho) * delta * delta
        p -= sp.learning_rate * delta

    def _adam(self, p, g, s):
        sp = self.spec
        s["m"] *= sp.beta1
        s["m"] += (1.0 - sp.beta1) * g
        s["v"] *= sp.beta2
        s["v"] += (1.0 - sp.beta2) * g * g
        m_hat = s["m"] / (1.0 - sp.beta1 ** self.t)
        v_hat = s["v"] / (1.0 - sp.beta2 ** self.t)
        p -= sp.learning_rate * m_hat / (np.sqrt(v_hat) + sp.eps)

    def _adamw(self, p, g, s):
        p *= 1.0 - self.spec.learning_rate * self.spec.weight_decay
        self._adam(p, g, s)

    def _adamax(self, p, g, s):
        sp = self.spec
        s["m"] *= sp.beta1
        s["m"] += (1.0 - sp.beta1) * g
        np.maximum(sp.beta2 * s["v"], np.abs(g) + sp.eps, out=s["v"])
        p -= sp.learning_rate / (1.0 - sp.beta1 ** self.t) * s["m"] / s["v"]


def optimizer_step(spec: OptimizerSpec, params, grads, state: Optimizer | None = None) -> Optimizer:
    """Apply one update in place; pass the returned state back in on the next call."""
    opt = state if state is not None else Optimizer(spec)
    opt.step(params, grads)
    return opt

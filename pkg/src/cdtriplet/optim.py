from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.name!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")


@dataclass
class OptimizerState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def optimizer_step(weights: list, grads: list, state: OptimizerState, config: OptimizerConfig) -> OptimizerState:
    """Update ``weights`` in place and return the advanced state."""
    if len(weights) != len(grads):
        raise ShapeError(f"{len(weights)} weights but {len(grads)} gradients")
    for w, g in zip(weights, grads):
        if w.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match weight shape {w.shape}")

    state.step += 1
    lr = config.learning_rate
    if config.name == "sgd":
        for w, g in zip(weights, grads):
            w -= (lr * g).astype(w.dtype, copy=False)
        return state

    if not state.m:
        state.m = [np.zeros(w.shape, dtype=np.float64) for w in weights]
        state.v = [np.zeros(w.shape, dtype=np.float64) for w in weights]
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for w, g, m, v in zip(weights, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        w -= update.astype(w.dtype, copy=False)
    return state

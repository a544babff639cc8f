"""Adam with bias correction, operating on the graph's parameter store."""

from dataclasses import dataclass

import numpy as np


@dataclass
class HyperParams:
    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs: int = 150
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    def __init__(self):
        self.m = {}           # (layer, field) -> array
        self.v = {}
        self.t = 0


def adam_step(params, grads, state, hp):
    """One Adam update in place over `grads`' keys.

    params: {layer: {field: array}}; grads mirrors it for the trainable
    subset. m/v tensors are created lazily on first sight of a parameter.
    """
    state.t += 1
    t = state.t
    b1, b2 = hp.beta1, hp.beta2
    for layer, fields in grads.items():
        for name, g in fields.items():
            p = params[layer][name]
            if g.shape != p.shape:
                raise ValueError(f"grad shape {g.shape} does not match param {layer}.{name} {p.shape}")
            key = (layer, name)
            if key not in state.m:
                state.m[key] = np.zeros_like(p)
                state.v[key] = np.zeros_like(p)
            m = state.m[key] = b1 * state.m[key] + (1 - b1) * g
            v = state.v[key] = b2 * state.v[key] + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            params[layer][name] = (p - hp.learning_rate * m_hat / (np.sqrt(v_hat) + hp.epsilon)).astype(p.dtype)
    return params, state

"""Feed-forward softmax policy: observation -> 32 tanh units -> action logits.

Parameters are one flat vector laid out as ``W1 (hidden x obs)``, ``b1``,
``W2 (actions x hidden)``, ``b2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from erlform.errors import StructuralError

HIDDEN = 32
INIT_SCALE = 0.1


@dataclass(frozen=True)
class PolicyShape:
    obs_width: int
    n_actions: int
    hidden: int = HIDDEN

    @property
    def size(self) -> int:
        return self.hidden * self.obs_width + self.hidden + self.n_actions * self.hidden + self.n_actions

    def unpack(self, params: np.ndarray):
        """Views ``(W1, b1, W2, b2)`` into ``params``."""
        if params.shape != (self.size,):
            raise StructuralError(f"expected {self.size} parameters for {self}, got {params.shape}")
        h, d, a = self.hidden, self.obs_width, self.n_actions
        i = 0
        w1 = params[i : i + h * d].reshape(h, d)
        i += h * d
        b1 = params[i : i + h]
        i += h
        w2 = params[i : i + a * h].reshape(a, h)
        i += a * h
        b2 = params[i : i + a]
        return w1, b1, w2, b2

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=self.size)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logits(shape: PolicyShape, params: np.ndarray, obs: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = shape.unpack(params)
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != shape.obs_width:
        raise StructuralError(f"observation width {obs.shape[-1]} != {shape.obs_width}")
    return np.tanh(obs @ w1.T + b1) @ w2.T + b2


def policy_forward(shape: PolicyShape, params: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Action probabilities for one observation (or a batch of them)."""
    return softmax(logits(shape, params, obs))


class CompiledPolicy:
    """Unpacked weights for fast single-observation rollouts."""

    __slots__ = ("w1", "b1", "w2", "b2", "n_actions")

    def __init__(self, shape: PolicyShape, params: np.ndarray):
        self.w1, self.b1, self.w2, self.b2 = shape.unpack(params)
        self.n_actions = shape.n_actions

    def probs(self, obs: np.ndarray) -> np.ndarray:
        z = self.w2 @ np.tanh(self.w1 @ obs + self.b1) + self.b2
        e = np.exp(z - z.max())
        return e / e.sum()

    def sample(self, obs: np.ndarray, u: float) -> int:
        """Inverse-CDF draw using the uniform variate ``u``."""
        cdf = np.cumsum(self.probs(obs))
        a = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
        return min(a, self.n_actions - 1)

    def greedy(self, obs: np.ndarray) -> int:
        z = self.w2 @ np.tanh(self.w1 @ obs + self.b1) + self.b2
        return int(np.argmax(z))

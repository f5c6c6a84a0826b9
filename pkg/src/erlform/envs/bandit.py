from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from erlform.shaping import RewardSample


@dataclass
class TwoArmedBandit:
    """Single-step sanity environment: arm 0 pays 1, arm 1 pays 0."""

    obs_width: int = 1
    n_actions: int = 2
    task_ids: tuple[str, ...] = ()

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.ones(1)

    def step(self, action: int):
        return np.ones(1), RewardSample(1.0 if action == 0 else 0.0, ()), True

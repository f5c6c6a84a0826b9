from __future__ import annotations

from typing import Protocol

import numpy as np

from erlform.shaping import RewardSample


class Environment(Protocol):
    """Episodic environment as seen by the trainer.

    ``step`` returns ``(observation, reward_sample, done)``. Observations are
    1-D float arrays with every feature in [-1, 1].
    """

    obs_width: int
    n_actions: int
    task_ids: tuple[str, ...]

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, action: int) -> tuple[np.ndarray, RewardSample, bool]: ...

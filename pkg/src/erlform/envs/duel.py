"""Grid duel: a boxing-like game on a square grid against a pursuing opponent.

Both players move in the four cardinal directions, stay, or punch. A punch
lands when the other player is Chebyshev-adjacent before movement. The first
to land ``hits_to_win`` punches wins; on timeout the player with more hits
wins and equal hits is a draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from erlform.envs.trace import EpisodeTrace
from erlform.errors import StructuralError, UsageError
from erlform.shaping import RewardSample

UP, DOWN, LEFT, RIGHT, STAY, PUNCH = range(6)
ACTIONS = ("up", "down", "left", "right", "stay", "punch")
_DELTAS = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0), STAY: (0, 0), PUNCH: (0, 0)}

TASK_IDS = ("hit", "hurt")
BEHAVIOR_IDS = ("agg", "def")
OBS_WIDTH = 7


@dataclass(frozen=True)
class DuelConfig:
    grid_size: int = 9
    hits_to_win: int = 5
    timeout: int = 200
    opponent_epsilon: float = 0.2

    kind = "duel"

    def __post_init__(self):
        if self.grid_size < 3:
            raise StructuralError("grid_size must be >= 3")
        if self.hits_to_win < 1:
            raise StructuralError("hits_to_win must be >= 1")
        if self.timeout <= self.hits_to_win:
            raise StructuralError("timeout must exceed hits_to_win")
        if not 0.0 <= self.opponent_epsilon <= 1.0:
            raise StructuralError("opponent_epsilon must be in [0, 1]")


@dataclass(frozen=True)
class DuelState:
    agent: tuple[int, int]
    opponent: tuple[int, int]
    agent_hits: int = 0
    opponent_hits: int = 0
    t: int = 0
    outcome: str | None = None

    @property
    def terminal(self) -> bool:
        return self.outcome is not None


@dataclass(frozen=True)
class DuelEvents:
    agent_punched: bool
    agent_landed: bool
    opponent_punched: bool
    opponent_landed: bool
    opponent_action: int


def chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def initial_state(cfg: DuelConfig) -> DuelState:
    mid = cfg.grid_size // 2
    x = (cfg.grid_size - 1) // 4
    return DuelState(agent=(x, mid), opponent=(cfg.grid_size - 1 - x, mid))


def opponent_action(state: DuelState, cfg: DuelConfig, rng: np.random.Generator) -> int:
    """Pursuit with epsilon noise: random move, else punch if adjacent, else chase."""
    if rng.random() < cfg.opponent_epsilon:
        return int(rng.integers(5))
    if chebyshev(state.agent, state.opponent) == 1:
        return PUNCH
    dx = state.agent[0] - state.opponent[0]
    dy = state.agent[1] - state.opponent[1]
    if abs(dx) >= abs(dy) and dx != 0:
        return RIGHT if dx > 0 else LEFT
    return DOWN if dy > 0 else UP


def _move(pos, action, size, blocked):
    dx, dy = _DELTAS[action]
    nx, ny = pos[0] + dx, pos[1] + dy
    if 0 <= nx < size and 0 <= ny < size and (nx, ny) != blocked:
        return (nx, ny)
    return pos


def duel_step(
    state: DuelState, agent_action: int, cfg: DuelConfig, rng: np.random.Generator
) -> tuple[DuelState, RewardSample, DuelEvents]:
    if state.terminal:
        raise UsageError("action on a finished duel")
    if not 0 <= agent_action < len(ACTIONS):
        raise UsageError(f"unknown duel action {agent_action}")
    opp_action = opponent_action(state, cfg, rng)
    adjacent = chebyshev(state.agent, state.opponent) == 1
    agent_landed = agent_action == PUNCH and adjacent
    opp_landed = opp_action == PUNCH and adjacent

    agent_pos = _move(state.agent, agent_action, cfg.grid_size, state.opponent)
    opp_pos = _move(state.opponent, opp_action, cfg.grid_size, agent_pos)
    agent_hits = state.agent_hits + agent_landed
    opp_hits = state.opponent_hits + opp_landed
    t = state.t + 1

    outcome = None
    r_perf = 0.0
    if agent_hits >= cfg.hits_to_win or opp_hits >= cfg.hits_to_win or t >= cfg.timeout:
        if agent_hits > opp_hits:
            outcome, r_perf = "win", 1.0
        elif agent_hits < opp_hits:
            outcome, r_perf = "loss", -1.0
        else:
            outcome = "draw"
    new_state = DuelState(agent_pos, opp_pos, agent_hits, opp_hits, t, outcome)
    sample = RewardSample(r_perf, (("hit", 1.0 if agent_landed else 0.0), ("hurt", -1.0 if opp_landed else 0.0)))
    events = DuelEvents(agent_action == PUNCH, agent_landed, opp_action == PUNCH, opp_landed, opp_action)
    return new_state, sample, events


def observe(state: DuelState, cfg: DuelConfig) -> np.ndarray:
    span = cfg.grid_size - 1
    return np.array(
        [
            (state.opponent[0] - state.agent[0]) / span,
            (state.opponent[1] - state.agent[1]) / span,
            state.agent_hits / cfg.hits_to_win,
            state.opponent_hits / cfg.hits_to_win,
            (cfg.timeout - state.t) / cfg.timeout,
            2.0 * state.agent[0] / span - 1.0,
            2.0 * state.agent[1] / span - 1.0,
        ]
    )


@dataclass
class DuelEnv:
    """Trainer-facing wrapper holding one match in progress."""

    cfg: DuelConfig = field(default_factory=DuelConfig)
    record: bool = False
    obs_width: int = OBS_WIDTH
    n_actions: int = len(ACTIONS)
    task_ids: tuple[str, ...] = TASK_IDS

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self.state = initial_state(self.cfg)
        self.trace = EpisodeTrace() if self.record else None
        return observe(self.state, self.cfg)

    def step(self, action: int):
        self.state, sample, events = duel_step(self.state, action, self.cfg, self._rng)
        if self.trace is not None:
            tr = self.trace
            tr.agent_positions.append(self.state.agent)
            tr.opponent_positions.append(self.state.opponent)
            tr.events.append(
                {
                    "t": self.state.t,
                    "agent_punched": events.agent_punched,
                    "agent_landed": events.agent_landed,
                    "opponent_punched": events.opponent_punched,
                    "opponent_landed": events.opponent_landed,
                }
            )
            if self.state.terminal:
                tr.length = self.state.t
                tr.outcome = self.state.outcome
                tr.points_won = self.state.agent_hits
                tr.points_lost = self.state.opponent_hits
        return observe(self.state, self.cfg), sample, self.state.terminal


def with_positions(state: DuelState, agent, opponent) -> DuelState:
    return replace(state, agent=tuple(agent), opponent=tuple(opponent))

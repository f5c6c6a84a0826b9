"""Rally: a tennis-like volley game on a small court.

The court has ``rows`` rows; the opponent stands on row 0 and only moves
sideways, the agent occupies the back half and may also move forward/back.
An incoming ball advances one row per frame, drifting sideways and bouncing
off the side lines. Swinging while the ball is in the agent's cell returns
it; the return's target column depends only on where contact happened (more
off-centre and closer to the net gives a sharper angle). Returns fly two
rows per frame. The opponent walks one column per frame toward the target
and returns the ball if it gets there before the ball does; otherwise the agent wins the point. A ball that passes
the agent's row is lost. There are no serves: each rally starts with the
opponent's shot already in flight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from erlform.envs.trace import EpisodeTrace, Shot
from erlform.errors import StructuralError, UsageError
from erlform.shaping import RewardSample

LEFT, RIGHT, FORWARD, BACK, STAY, SWING = range(6)
ACTIONS = ("left", "right", "forward", "back", "stay", "swing")

TASK_IDS = ("aim", "mob")
BEHAVIOR_IDS = ("aim", "mob")
OBS_WIDTH = 9
RETURN_SPEED = 2  # rows per frame for the agent's returns


@dataclass(frozen=True)
class RallyConfig:
    columns: int = 9
    rows: int = 7
    rallies_per_match: int = 10
    max_frames: int = 120

    kind = "rally"

    def __post_init__(self):
        if self.columns < 3:
            raise StructuralError("columns must be >= 3")
        if self.rows < 3:
            raise StructuralError("rows must be >= 3")
        if self.rallies_per_match < 1:
            raise StructuralError("rallies_per_match must be >= 1")
        if self.max_frames < 1:
            raise StructuralError("max_frames must be >= 1")

    @property
    def front_row(self) -> int:
        """Closest row to the net the agent may enter."""
        return self.rows // 2


@dataclass(frozen=True)
class RallyState:
    agent_row: int
    agent_col: int
    ball_row: int
    ball_col: int
    incoming: bool
    drift: int
    opponent_col: int
    target: int | None = None
    frame: int = 0
    result: str | None = None  # "won", "lost" or "timeout"

    @property
    def finished(self) -> bool:
        return self.result is not None


@dataclass(frozen=True)
class RallyEvents:
    swung: bool
    returned: bool
    moved_vertically: bool
    shot: Shot | None


def start_rally(cfg: RallyConfig, rng: np.random.Generator) -> RallyState:
    col = int(rng.integers(cfg.columns))
    drift = int(rng.integers(-1, 2))
    return RallyState(cfg.rows - 1, cfg.columns // 2, 0, col, True, drift, col)


def return_target(row: int, col: int, cfg: RallyConfig) -> int:
    """Target column of a return struck at ``(row, col)``.

    Cross-court mirror of the contact column, widened by how far forward the
    contact was made.
    """
    center = cfg.columns // 2
    depth = cfg.rows - 1 - row
    target = center - (col - center) * (1 + depth)
    return min(max(target, 0), cfg.columns - 1)


def aim_reward(target: int, opponent_col: int, cfg: RallyConfig) -> float:
    return abs(target - opponent_col) / (cfg.columns - 1)


def _toward(x: int, goal: int) -> int:
    return x + (goal > x) - (goal < x)


def _bounce(col: int, drift: int, columns: int) -> tuple[int, int]:
    col += drift
    if col < 0:
        return -col, -drift
    if col > columns - 1:
        return 2 * (columns - 1) - col, -drift
    return col, drift


def rally_step(
    state: RallyState, agent_action: int, cfg: RallyConfig, rng: np.random.Generator
) -> tuple[RallyState, RewardSample, RallyEvents]:
    if state.finished:
        raise UsageError("action after the rally ended")
    if not 0 <= agent_action < len(ACTIONS):
        raise UsageError(f"unknown rally action {agent_action}")
    row, col = state.agent_row, state.agent_col
    ball_row, ball_col = state.ball_row, state.ball_col
    incoming, drift, opp, target = state.incoming, state.drift, state.opponent_col, state.target
    result = None
    r_perf = r_aim = 0.0
    shot = None

    if agent_action == LEFT:
        col = max(col - 1, 0)
    elif agent_action == RIGHT:
        col = min(col + 1, cfg.columns - 1)
    elif agent_action == FORWARD:
        row = max(row - 1, cfg.front_row)
    elif agent_action == BACK:
        row = min(row + 1, cfg.rows - 1)
    returned = agent_action == SWING and incoming and (ball_row, ball_col) == (row, col)
    if returned:
        target = return_target(row, col, cfg)
        r_aim = aim_reward(target, opp, cfg)
        shot = Shot(target, opp, False, r_aim)
        incoming, drift = False, 0

    if incoming:
        passed = ball_row + 1 > row
        ball_row = min(ball_row + 1, cfg.rows - 1)
        ball_col, drift = _bounce(ball_col, drift, cfg.columns)
        opp = _toward(opp, cfg.columns // 2)
        if passed:
            result, r_perf = "lost", -1.0
            shot = Shot(-1, opp, True, 0.0)
    else:
        ball_row -= RETURN_SPEED
        ball_col = target
        opp = _toward(opp, target)
        if ball_row <= 0:
            ball_row = 0
            if opp == target:
                incoming, drift, target = True, int(rng.integers(-1, 2)), None
            else:
                result, r_perf = "won", 1.0

    frame = state.frame + 1
    if result is None and frame >= cfg.max_frames:
        result = "timeout"
    new_state = RallyState(row, col, ball_row, ball_col, incoming, drift, opp, target, frame, result)
    moved = row != state.agent_row
    sample = RewardSample(r_perf, (("aim", r_aim), ("mob", 1.0 if moved else 0.0)))
    events = RallyEvents(agent_action == SWING, returned, moved, shot)
    return new_state, sample, events


def observe(state: RallyState, cfg: RallyConfig) -> np.ndarray:
    rs, cs = cfg.rows - 1, cfg.columns - 1
    return np.array(
        [
            2.0 * state.agent_row / rs - 1.0,
            2.0 * state.agent_col / cs - 1.0,
            2.0 * state.ball_row / rs - 1.0,
            2.0 * state.ball_col / cs - 1.0,
            2.0 * state.opponent_col / cs - 1.0,
            1.0 if state.incoming else -1.0,
            float(state.drift),
            (state.ball_col - state.agent_col) / cs,
            (state.ball_row - state.agent_row) / rs,
        ]
    )


@dataclass
class RallyEnv:
    """Trainer-facing wrapper; one training episode is one rally.

    With ``record`` set, :meth:`step` also fills ``trace`` so that several
    rallies can be accumulated into one match trace by the caller.
    """

    cfg: RallyConfig = field(default_factory=RallyConfig)
    record: bool = False
    obs_width: int = OBS_WIDTH
    n_actions: int = len(ACTIONS)
    task_ids: tuple[str, ...] = TASK_IDS
    trace: EpisodeTrace | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self.state = start_rally(self.cfg, rng)
        if self.record and self.trace is None:
            self.trace = EpisodeTrace()
        return observe(self.state, self.cfg)

    def step(self, action: int):
        self.state, sample, events = rally_step(self.state, action, self.cfg, self._rng)
        tr = self.trace
        if self.record and tr is not None:
            tr.length += 1
            tr.agent_positions.append((self.state.agent_row, self.state.agent_col))
            tr.opponent_positions.append((0, self.state.opponent_col))
            tr.frames_moved_vertically += events.moved_vertically
            if events.shot is not None:
                tr.shots.append(events.shot)
            tr.events.append({"frame": self.state.frame, "swung": events.swung, "returned": events.returned})
            if self.state.finished:
                tr.points_played += 1
                tr.points_won += self.state.result == "won"
                tr.points_lost += self.state.result == "lost"
        return observe(self.state, self.cfg), sample, self.state.finished

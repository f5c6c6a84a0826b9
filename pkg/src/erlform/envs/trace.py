from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class Shot:
    target_column: int
    opponent_column: int
    missed: bool
    r_aim: float = 0.0


@dataclass
class EpisodeTrace:
    """Raw record of one match, the input to the behavior metrics."""

    length: int = 0
    agent_positions: list = field(default_factory=list)
    opponent_positions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    shots: list[Shot] = field(default_factory=list)
    frames_moved_vertically: int = 0
    outcome: str | None = None
    points_won: int = 0
    points_lost: int = 0
    points_played: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent_positions"] = [list(p) for p in self.agent_positions]
        d["opponent_positions"] = [list(p) for p in self.opponent_positions]
        return d

"""Desk-scale games, their behavior metrics, and greedy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from erlform.envs import duel, rally
from erlform.envs.bandit import TwoArmedBandit
from erlform.envs.duel import DuelConfig, DuelEnv
from erlform.envs.rally import RallyConfig, RallyEnv
from erlform.envs.trace import EpisodeTrace, Shot
from erlform.errors import EvaluationError, StructuralError
from erlform.moo import PERF, ObjectiveVector
from erlform.policy import CompiledPolicy, PolicyShape

MATCHES_PER_EVAL = 10

EnvConfig = DuelConfig | RallyConfig

__all__ = [
    "DuelConfig",
    "DuelEnv",
    "EnvConfig",
    "EpisodeTrace",
    "EvalReport",
    "RallyConfig",
    "RallyEnv",
    "Shot",
    "TwoArmedBandit",
    "behavior_ids",
    "compute_behavior_metrics",
    "evaluate",
    "make_env",
    "objective_ids",
    "play_match",
    "policy_shape",
]


def make_env(cfg: EnvConfig, record: bool = False):
    if isinstance(cfg, DuelConfig):
        return DuelEnv(cfg, record=record)
    if isinstance(cfg, RallyConfig):
        return RallyEnv(cfg, record=record)
    raise StructuralError(f"unknown environment config {cfg!r}")


def policy_shape(cfg: EnvConfig) -> PolicyShape:
    env = make_env(cfg)
    return PolicyShape(env.obs_width, env.n_actions)


def behavior_ids(cfg: EnvConfig) -> tuple[str, ...]:
    return duel.BEHAVIOR_IDS if isinstance(cfg, DuelConfig) else rally.BEHAVIOR_IDS


def objective_ids(cfg: EnvConfig) -> tuple[str, ...]:
    return (PERF,) + behavior_ids(cfg)


def _clip01(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


def compute_behavior_metrics(traces: list[EpisodeTrace], cfg: EnvConfig) -> list[tuple[str, float]]:
    """Behavior objectives in [0, 1] from raw match traces.

    duel: ``agg`` is one minus the mean match length over the timeout, ``def``
    the mean per-step Chebyshev distance over the largest possible one.
    rally: ``aim`` averages the aim reward over every ball faced, a missed ball
    counting as zero; ``mob`` is vertical cells moved per frame.
    """
    if not traces:
        raise StructuralError("no traces to measure")
    if isinstance(cfg, DuelConfig):
        agg = 1.0 - np.mean([tr.length for tr in traces]) / cfg.timeout
        dists = [
            duel.chebyshev(a, o)
            for tr in traces
            for a, o in zip(tr.agent_positions, tr.opponent_positions)
        ]
        dfn = np.mean(dists) / (cfg.grid_size - 1) if dists else 0.0
        return [("agg", _clip01(agg)), ("def", _clip01(dfn))]
    shots = [s for tr in traces for s in tr.shots]
    aim = np.mean([0.0 if s.missed else s.r_aim for s in shots]) if shots else 0.0
    frames = sum(tr.length for tr in traces)
    mob = sum(tr.frames_moved_vertically for tr in traces) / frames if frames else 0.0
    return [("aim", _clip01(aim)), ("mob", _clip01(mob))]


def play_match(policy, cfg: EnvConfig, rng: np.random.Generator) -> EpisodeTrace:
    """One full match with ``policy(obs) -> action``; returns its trace."""
    env = make_env(cfg, record=True)
    if isinstance(cfg, DuelConfig):
        obs, done = env.reset(rng), False
        while not done:
            obs, _, done = env.step(policy(obs))
        return env.trace
    env.trace = EpisodeTrace()
    for _ in range(cfg.rallies_per_match):
        obs, done = env.reset(rng), False
        while not done:
            obs, _, done = env.step(policy(obs))
    tr = env.trace
    if tr.points_won > tr.points_lost:
        tr.outcome = "win"
    elif tr.points_won < tr.points_lost:
        tr.outcome = "loss"
    else:
        tr.outcome = "draw"
    return tr


@dataclass
class EvalReport:
    objective_vector: ObjectiveVector
    wins: int
    draws: int
    losses: int
    traces: list[EpisodeTrace] = field(default_factory=list)
    matches_played: int = MATCHES_PER_EVAL


def report_from_traces(traces: list[EpisodeTrace], cfg: EnvConfig) -> EvalReport:
    wins = sum(tr.outcome == "win" for tr in traces)
    draws = sum(tr.outcome == "draw" for tr in traces)
    losses = sum(tr.outcome == "loss" for tr in traces)
    if isinstance(cfg, DuelConfig):
        perf = wins / len(traces)
    else:
        played = sum(tr.points_played for tr in traces)
        perf = sum(tr.points_won for tr in traces) / played if played else 0.0
    scores = [(PERF, perf)] + compute_behavior_metrics(traces, cfg)
    vec = ObjectiveVector(tuple(k for k, _ in scores), tuple(v for _, v in scores))
    return EvalReport(vec, wins, draws, losses, traces, matches_played=len(traces))


def evaluate(params: np.ndarray, cfg: EnvConfig, rng: np.random.Generator) -> EvalReport:
    """Greedy play over ten matches against the scripted opponent."""
    params = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(params)):
        raise EvaluationError("cannot evaluate non-finite policy parameters")
    pol = CompiledPolicy(policy_shape(cfg), params)
    traces = [play_match(pol.greedy, cfg, rng) for _ in range(MATCHES_PER_EVAL)]
    return report_from_traces(traces, cfg)

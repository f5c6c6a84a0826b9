"""Episodic REINFORCE over the shaped reward, with an entropy bonus.

Each episode is rolled out with the stochastic policy, turned into discounted
returns of the shaped reward, centred by a smoothed episode-mean baseline, and
used for one plain gradient-ascent step on

    J = mean_t [ A_t * log pi(a_t | s_t) + beta * H(pi(. | s_t)) ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from erlform.envs.base import Environment
from erlform.errors import StructuralError, TrainingDivergenceError
from erlform.policy import CompiledPolicy, PolicyShape, softmax
from erlform.shaping import ShapingWeights, shaped_reward

BASELINE_DECAY = 0.9


@dataclass(frozen=True)
class TrainBudget:
    episodes: int = 200
    gamma: float = 0.99
    learning_rate: float = 0.05
    entropy_coeff: float = 0.01

    def __post_init__(self):
        if self.episodes < 1:
            raise StructuralError("episodes must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise StructuralError("gamma must be in (0, 1]")
        if self.learning_rate < 0.0 or self.entropy_coeff < 0.0:
            raise StructuralError("learning_rate and entropy_coeff must be non-negative")


@dataclass
class Episode:
    obs: np.ndarray  # (T, obs_width)
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,) shaped


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def rollout(
    shape: PolicyShape,
    params: np.ndarray,
    env: Environment,
    weights: ShapingWeights,
    rng: np.random.Generator,
) -> Episode:
    pol = CompiledPolicy(shape, params)
    obs = env.reset(rng)
    xs, acts, rews = [], [], []
    done = False
    while not done:
        a = pol.sample(obs, rng.random())
        xs.append(obs)
        acts.append(a)
        obs, sample, done = env.step(a)
        rews.append(shaped_reward(sample, weights))
    return Episode(np.array(xs), np.array(acts, dtype=int), np.array(rews))


def _forward_batch(shape: PolicyShape, params: np.ndarray, obs: np.ndarray):
    w1, b1, w2, b2 = shape.unpack(params)
    hid = np.tanh(obs @ w1.T + b1)
    z = hid @ w2.T + b2
    p = softmax(z)
    return hid, z, p


def surrogate_objective(
    shape: PolicyShape,
    params: np.ndarray,
    obs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    beta: float,
) -> float:
    _, z, p = _forward_batch(shape, params, obs)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    ent = -(p * logp).sum(axis=1)
    chosen = logp[np.arange(len(actions)), actions]
    return float(np.mean(advantages * chosen + beta * ent))


def surrogate_gradient(
    shape: PolicyShape,
    params: np.ndarray,
    obs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    beta: float,
) -> np.ndarray:
    """Analytic gradient of :func:`surrogate_objective` w.r.t. ``params``."""
    w1, b1, w2, b2 = shape.unpack(params)
    hid, z, p = _forward_batch(shape, params, obs)
    t = len(actions)
    logp = np.log(np.maximum(p, 1e-300))
    ent = -(p * logp).sum(axis=1, keepdims=True)
    onehot = np.zeros_like(p)
    onehot[np.arange(t), actions] = 1.0
    dz = advantages[:, None] * (onehot - p) - beta * p * (logp + ent)
    dz /= t
    g_w2 = dz.T @ hid
    g_b2 = dz.sum(axis=0)
    dpre = (dz @ w2) * (1.0 - hid * hid)
    g_w1 = dpre.T @ obs
    g_b1 = dpre.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def train(
    shape: PolicyShape,
    params: np.ndarray,
    env: Environment,
    weights: ShapingWeights,
    budget: TrainBudget,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run ``budget.episodes`` episodes of policy-gradient ascent; returns new params."""
    if env.obs_width != shape.obs_width or env.n_actions != shape.n_actions:
        raise StructuralError("environment does not match the policy shape")
    theta = np.array(params, dtype=float, copy=True)
    shape.unpack(theta)
    baseline = None
    for _ in range(budget.episodes):
        ep = rollout(shape, theta, env, weights, rng)
        returns = discounted_returns(ep.rewards, budget.gamma)
        m = returns.mean()
        baseline = m if baseline is None else BASELINE_DECAY * baseline + (1 - BASELINE_DECAY) * m
        adv = returns - baseline
        grad = surrogate_gradient(shape, theta, ep.obs, ep.actions, adv, budget.entropy_coeff)
        theta = theta + budget.learning_rate * grad
        if not np.all(np.isfinite(theta)):
            raise TrainingDivergenceError("policy parameters became non-finite")
    return theta

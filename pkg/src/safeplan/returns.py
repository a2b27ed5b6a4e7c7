"""Bootstrapped lambda-returns and horizon/episode cost aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RolloutScalars:
    """Per-step scalars of one H-step rollout; all arrays have length H+1.

    Index t is the state s_t: rewards[t] / costs[t] are received at s_t
    (index 0 is the pre-rollout state, so rewards[0] is typically 0), and
    values_* are critic estimates at s_t.
    """

    rewards: np.ndarray
    costs: np.ndarray
    values_reward: np.ndarray
    values_cost: np.ndarray
    discount: float = 0.997
    reward_lambda: float = 0.95
    cost_lambda: float = 0.95
    horizon: int = 0
    episode_length: int = 300

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        self.values_reward = np.asarray(self.values_reward, dtype=np.float64)
        self.values_cost = np.asarray(self.values_cost, dtype=np.float64)
        if self.horizon == 0:
            self.horizon = self.rewards.shape[-1] - 1
        h1 = self.horizon + 1
        for name in ("rewards", "costs", "values_reward", "values_cost"):
            arr = getattr(self, name)
            if arr.shape[-1] != h1:
                raise ValueError(f"{name} must have length horizon+1={h1}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.discount < 1.0 and self.discount != 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 <= self.reward_lambda <= 1.0 or not 0.0 <= self.cost_lambda <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if np.any(self.costs < 0):
            raise ValueError("costs must be nonnegative")


def lambda_return_arrays(rewards, values, discount: float, lam: float) -> np.ndarray:
    """R^lam[t] = r[t] + g*((1-lam)*v[t+1] + lam*R^lam[t+1]); R^lam[H] = v[H].

    Works on (..., H+1) arrays; the recurrence runs along the last axis.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards/values length mismatch")
    out = np.empty_like(values)
    out[..., -1] = values[..., -1]
    horizon = rewards.shape[-1] - 1
    for t in range(horizon - 1, -1, -1):
        out[..., t] = rewards[..., t] + discount * (
            (1.0 - lam) * values[..., t + 1] + lam * out[..., t + 1]
        )
    return out


def lambda_return(s: RolloutScalars, kind: str = "reward") -> np.ndarray:
    """Bootstrapped lambda-returns for the reward or cost channel of a rollout."""
    if kind == "reward":
        return lambda_return_arrays(s.rewards, s.values_reward, s.discount, s.reward_lambda)
    if kind == "cost":
        return lambda_return_arrays(s.costs, s.values_cost, s.discount, s.cost_lambda)
    raise ValueError(f"kind must be 'reward' or 'cost', got {kind!r}")


def discounted_lambda_return(rewards, values, discounts, lam: float) -> np.ndarray:
    """Lambda-return with a per-step discount vector (termination gating).

    discounts[t] multiplies the bootstrap from step t to t+1, i.e.
    R[t] = r[t] + d[t+1] * ((1-lam)*v[t+1] + lam*R[t+1]). discounts has the
    same (..., H+1) shape as rewards; discounts[..., 0] is unused.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    discounts = np.asarray(discounts, dtype=np.float64)
    out = np.empty_like(values)
    out[..., -1] = values[..., -1]
    horizon = rewards.shape[-1] - 1
    for t in range(horizon - 1, -1, -1):
        out[..., t] = rewards[..., t] + discounts[..., t + 1] * (
            (1.0 - lam) * values[..., t + 1] + lam * out[..., t + 1]
        )
    return out


def horizon_cost(costs, discount: float) -> float:
    """Finite-horizon discounted cost: sum_i gamma^(i-1) * costs[i-1].

    `costs` holds the H per-step costs of the planned trajectory (the cost of
    each newly reached state), discounted relative to the plan start.
    """
    costs = np.asarray(costs, dtype=np.float64)
    acc = 0.0
    for c in costs[::-1]:
        acc = discount * acc + c
    return float(acc)


def horizon_cost_batch(costs, discount: float) -> np.ndarray:
    """horizon_cost along the last axis of a (..., H) array."""
    costs = np.asarray(costs, dtype=np.float64)
    acc = np.zeros(costs.shape[:-1])
    for i in range(costs.shape[-1] - 1, -1, -1):
        acc = discount * acc + costs[..., i]
    return acc


def episode_scaled_cost(jch, horizon: int, episode_length: int):
    """Extrapolate an H-step cost to episode scale: (J^{C,H} / H) * L."""
    if horizon < 1 or episode_length < 1:
        raise ValueError("horizon and episode length must be >= 1")
    return (np.asarray(jch, dtype=np.float64) / horizon) * episode_length

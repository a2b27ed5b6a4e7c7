"""Constrained cross-entropy planning over world-model rollouts.

Each decision step samples action trajectories from a per-timestep Gaussian
(optionally mixed with policy rollouts), scores them with bootstrapped
lambda-returns, filters them against the episode-scaled cost threshold, and
refits the Gaussian from the top-k elites. Only the first action of the final
sampled trajectory is executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import returns as ret
from .worldmodel import imagine


class PlanningError(RuntimeError):
    pass


@dataclass
class PlannerConfig:
    horizon: int = 15
    num_samples: int = 500  # trajectories drawn from the Gaussian per iteration
    mixture: float = 0.05  # policy trajectories as a fraction of num_samples
    iterations: int = 6
    init_std: float = 1.0
    elite_count: int = 50
    safe_count: int = 50  # required safe trajectories before optimizing reward
    cost_limit: float = 2.0
    episode_length: int = 300
    discount: float = 0.997
    reward_lambda: float = 0.95
    cost_lambda: float = 0.95
    sigma_floor: float = 1e-3
    variant: str = "plan"  # "plan" or "plan-l"

    def __post_init__(self):
        if self.horizon < 1 or self.num_samples < 1 or self.iterations < 1:
            raise ValueError("horizon, num_samples and iterations must be >= 1")
        if self.elite_count < 1 or self.elite_count > self.num_samples:
            raise ValueError("elite_count must lie in [1, num_samples]")
        if self.mixture < 0:
            raise ValueError("mixture must be >= 0")
        if self.cost_limit < 0:
            raise ValueError("cost_limit must be >= 0")
        if self.variant not in ("plan", "plan-l"):
            raise ValueError(f"unknown planner variant {self.variant!r}")

    @property
    def policy_samples(self) -> int:
        return int(round(self.mixture * self.num_samples))


@dataclass
class TrajectoryScores:
    """Per-trajectory evaluation: reward return, cost return, scaled episode cost."""

    j_reward: np.ndarray  # R^lambda at the start state
    j_cost: np.ndarray  # C^lambda at the start state
    j_cost_scaled: np.ndarray  # (J^{C,H} / H) * L


@dataclass
class IterationTrace:
    iteration: int
    n_safe: int
    branch: str  # "safety" or "objective"
    candidate_count: int
    best_key: float
    elite_min_key: float
    elite_indices: np.ndarray
    mu: np.ndarray  # refit result, (H, act_dim)
    sigma: np.ndarray
    mu_mean: float
    sigma_mean: float
    sigma_min: float

    def format_line(self) -> str:
        return (
            f"iter={self.iteration} n_safe={self.n_safe} branch={self.branch} "
            f"candidates={self.candidate_count} best_key={self.best_key:.6g} "
            f"elite_min_key={self.elite_min_key:.6g} mu_mean={self.mu_mean:.4g} "
            f"sigma_mean={self.sigma_mean:.4g} sigma_min={self.sigma_min:.4g}"
        )


def sorting_key(scores: TrajectoryScores, variant: str, lam: float,
                n_safe: int, safe_count: int):
    """Keys and branch for one iteration's candidate selection.

    Too few safe trajectories: rank everything by negated scaled cost.
    Otherwise rank safe trajectories by reward ("plan") or by reward minus
    the multiplier-weighted cost return ("plan-l").
    """
    if n_safe < safe_count:
        return -scores.j_cost_scaled, "safety"
    if variant == "plan":
        return scores.j_reward, "objective"
    return scores.j_reward - lam * scores.j_cost, "objective"


def refit(elite_actions: np.ndarray):
    """Mean and population std (divisor k) of elite trajectories, per timestep."""
    if elite_actions.ndim != 3 or elite_actions.shape[0] < 1:
        raise PlanningError("refit requires a non-empty (k, H, A) elite set")
    mu = elite_actions.mean(axis=0)
    sigma = elite_actions.std(axis=0)  # ddof=0
    return mu, sigma


def evaluate_trajectories(traj, value_reward, value_cost, cfg: PlannerConfig) -> TrajectoryScores:
    """Score a TrajectoryBatch with lambda-returns and the scaled horizon cost."""
    n, h1 = traj.rewards.shape
    flat_obs = traj.obs.reshape(n * h1, -1)
    v_r = np.asarray(value_reward(flat_obs)).reshape(n, h1)
    v_c = np.asarray(value_cost(flat_obs)).reshape(n, h1)
    j_reward = ret.lambda_return_arrays(traj.rewards, v_r, cfg.discount, cfg.reward_lambda)[:, 0]
    j_cost = ret.lambda_return_arrays(traj.costs, v_c, cfg.discount, cfg.cost_lambda)[:, 0]
    jch = ret.horizon_cost_batch(traj.costs[:, :-1], cfg.discount)
    j_scaled = ret.episode_scaled_cost(jch, cfg.horizon, cfg.episode_length)
    return TrajectoryScores(j_reward=j_reward, j_cost=j_cost, j_cost_scaled=j_scaled)


def plan(obs, model, value_reward, value_cost, cfg: PlannerConfig, seed,
         act_dim: int = 2, actor=None, lam: float = 0.0, ctx=None, trace=None):
    """Run the full planning procedure at one decision point; returns an action.

    Args:
        obs: current observation vector.
        model: world model with predict().
        value_reward / value_cost: callables mapping an observation batch to
            decoded critic values.
        seed: RNG seed for this decision; all sampling derives from it, so
            identical seeds give identical plans regardless of batch layout.
        actor: optional callable (obs_batch, noise_batch) -> action batch used
            for the policy-sampled share of trajectories.
        lam: Lagrangian multiplier for the "plan-l" sorting key.
        ctx: forwarded to the model (episode ids for oracle lookups).
        trace: optional list collecting IterationTrace records.
    """
    obs = np.asarray(obs, dtype=np.float64)
    h = cfg.horizon
    mu = np.zeros((h, act_dim))
    sigma = np.full((h, act_dim), cfg.init_std)
    rng = np.random.default_rng(seed)
    n_actor = cfg.policy_samples if actor is not None else 0
    n_total = cfg.num_samples + n_actor
    start = np.repeat(obs[None, :], n_total, axis=0)
    row_ctx = None if ctx is None else np.full(n_total, ctx)

    for j in range(1, cfg.iterations + 1):
        # noise is drawn in one block per iteration and indexed by trajectory,
        # so evaluation order (serial or parallel) cannot change the result
        gauss_noise = rng.standard_normal((cfg.num_samples, h, act_dim))
        gauss_actions = np.clip(mu + sigma * gauss_noise, -1.0, 1.0)
        if n_actor:
            actor_noise = rng.standard_normal((n_actor, h, act_dim))

        if n_actor:
            step_idx = 0

            def hybrid_policy(obs_batch):
                nonlocal step_idx
                acts = np.empty((n_total, act_dim))
                acts[: cfg.num_samples] = gauss_actions[:, step_idx]
                acts[cfg.num_samples :] = actor(
                    obs_batch[cfg.num_samples :], actor_noise[:, step_idx]
                )
                step_idx += 1
                return acts

            traj = imagine(model, start, hybrid_policy, h, ctx=row_ctx)
        else:
            traj = imagine(model, start, gauss_actions, h, ctx=row_ctx)

        if not (np.all(np.isfinite(traj.obs)) and np.all(np.isfinite(traj.rewards))):
            raise PlanningError(f"non-finite model prediction at iteration {j}")

        scores = evaluate_trajectories(traj, value_reward, value_cost, cfg)
        safe = np.nonzero(scores.j_cost_scaled < cfg.cost_limit)[0]
        keys, branch = sorting_key(scores, cfg.variant, lam, safe.size, cfg.safe_count)
        candidates = np.arange(n_total) if branch == "safety" else safe
        order = np.argsort(-keys[candidates], kind="stable")
        k = min(cfg.elite_count, candidates.size)
        elite_idx = candidates[order[:k]]
        mu, sigma = refit(traj.actions[elite_idx])
        sigma = np.maximum(sigma, cfg.sigma_floor)

        if trace is not None:
            trace.append(IterationTrace(
                iteration=j,
                n_safe=int(safe.size),
                branch=branch,
                candidate_count=int(candidates.size),
                best_key=float(keys[elite_idx[0]]),
                elite_min_key=float(keys[elite_idx[-1]]),
                elite_indices=elite_idx.copy(),
                mu=mu.copy(),
                sigma=sigma.copy(),
                mu_mean=float(mu.mean()),
                sigma_mean=float(sigma.mean()),
                sigma_min=float(sigma.min()),
            ))

    final = np.clip(mu + sigma * rng.standard_normal((h, act_dim)), -1.0, 1.0)
    return final[0]

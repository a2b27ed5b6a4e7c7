"""Actor, discrete-regression critics, replay buffer and imagination losses.

The actor losses differentiate the full imagined rollout (actions -> model ->
states -> rewards/costs/values -> lambda-returns) with a hand-rolled reverse
pass, so finite differences of the returned scalar match the returned
gradients exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codec, nets
from .lagrange import AugmentedLagrangian
from .worldmodel import TrajectoryBatch, TransitionBatch


class TrainingError(RuntimeError):
    pass


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# -- policy -------------------------------------------------------------------


class Actor:
    """Squashed diagonal-Gaussian policy: an MLP emits per-dimension action
    means and raw log-std values that are smoothly bounded before use."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, layers: int,
                 rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.params = nets.init_mlp([obs_dim] + [hidden] * layers + [2 * act_dim], rng)

    def heads(self, obs):
        y = nets.forward(self.params, np.atleast_2d(obs))
        return y[:, : self.act_dim], y[:, self.act_dim :]

    def sample(self, obs, noise):
        """Reparameterised action sample; noise has the action shape."""
        mean, raw = self.heads(obs)
        log_std = nets.squash_log_std(raw)
        return nets.gaussian_head_sample(mean, log_std, np.atleast_2d(noise))

    def mean_action(self, obs):
        mean, _ = self.heads(obs)
        return np.tanh(mean)


# -- critics ------------------------------------------------------------------


class Critic:
    """Value head over a symmetric bin lattice; decoded value is
    symexp(p . centers) of the softmax distribution."""

    def __init__(self, obs_dim: int, hidden: int, layers: int,
                 rng: np.random.Generator, lattice: codec.BinLattice | None = None):
        self.lattice = lattice or codec.DEFAULT_LATTICE
        self.params = nets.init_mlp([obs_dim] + [hidden] * layers + [self.lattice.size], rng)

    def probs(self, obs):
        return _softmax(nets.forward(self.params, np.atleast_2d(obs)))

    def values(self, obs):
        v, _, _ = self.values_with_cache(obs)
        return v

    def values_with_cache(self, obs):
        """Returns (values, probs, q) where q = p . centers (pre-symexp)."""
        p = self.probs(obs)
        q = p @ self.lattice.centers
        return codec.symexp(q), p, q

    def input_grads_from_cache(self, obs, probs, q, d_values):
        """d(value)/d(obs) chained through decode and softmax."""
        dq = np.asarray(d_values) * codec.symexp_deriv(q)
        dlogits = probs * (self.lattice.centers[None, :] - q[:, None]) * dq[:, None]
        _, d_obs = nets.backward(self.params, np.atleast_2d(obs), dlogits)
        return d_obs

    def loss_and_grads(self, obs, targets, weights=None):
        """Twohot cross-entropy against symlog-compressed scalar targets.

        Targets are constants (no gradient flows back into their source).
        Returns (mean loss, GradientRecord).
        """
        obs = np.atleast_2d(obs)
        targets = np.asarray(targets, dtype=np.float64)
        if not np.all(np.isfinite(targets)):
            raise TrainingError(
                f"non-finite critic target at index {int(np.argmax(~np.isfinite(targets)))}"
            )
        n = obs.shape[0]
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        twohot = codec.twohot_encode_batch(codec.symlog(targets), self.lattice)
        logits = nets.forward(self.params, obs)
        logp = logits - logits.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        loss = float(-((twohot * logp).sum(axis=1) * w).sum() / n)
        dlogits = (np.exp(logp) - twohot) * (w / n)[:, None]
        grads, _ = nets.backward(self.params, obs, dlogits)
        return loss, grads


# -- replay -------------------------------------------------------------------


class ReplayBuffer:
    """Ring buffer of transitions; samples fixed-length sequences that never
    cross episode boundaries."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, seed: int = 0):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.reward = np.zeros(capacity)
        self.cost = np.zeros(capacity)
        self.cont = np.zeros(capacity)
        self.episode = np.full(capacity, -1, dtype=np.int64)
        self.size = 0
        self._ptr = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def add(self, obs, action, next_obs, reward, cost, cont, episode_id: int):
        i = self._ptr
        self.obs[i] = obs
        self.action[i] = action
        self.next_obs[i] = next_obs
        self.reward[i] = reward
        self.cost[i] = cost
        self.cont[i] = cont
        self.episode[i] = episode_id
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _valid_start(self, starts, seq_len):
        idx = (starts[:, None] + np.arange(seq_len)[None, :]) % self.capacity
        ep = self.episode[idx]
        same_episode = np.all(ep == ep[:, :1], axis=1)
        in_range = np.all(idx < self.size, axis=1) if self.size < self.capacity else np.ones(len(starts), bool)
        return same_episode & in_range

    def sample_sequences(self, batch_size: int, seq_len: int) -> TransitionBatch:
        """Uniformly sample batch_size sequences of seq_len transitions."""
        if self.size < seq_len:
            raise TrainingError("buffer holds fewer transitions than one sequence")
        chosen = []
        for _ in range(200):
            cand = self._rng.integers(0, self.size, size=2 * batch_size)
            ok = cand[self._valid_start(cand, seq_len)]
            chosen.extend(ok.tolist())
            if len(chosen) >= batch_size:
                break
        else:
            raise TrainingError("could not sample enough within-episode sequences")
        starts = np.array(chosen[:batch_size])
        idx = ((starts[:, None] + np.arange(seq_len)[None, :]) % self.capacity).ravel()
        return TransitionBatch(
            obs=self.obs[idx],
            action=self.action[idx],
            next_obs=self.next_obs[idx],
            reward=self.reward[idx],
            cost=self.cost[idx],
            cont=self.cont[idx],
            episode=self.episode[idx],
        )


# -- imagination tape ----------------------------------------------------------


@dataclass
class ImaginationTape:
    """Everything the actor-loss reverse pass needs from a rollout."""

    traj: TrajectoryBatch
    means: np.ndarray  # (n, H, A)
    raws: np.ndarray  # raw log-std head outputs
    log_stds: np.ndarray
    noise: np.ndarray
    entropies: np.ndarray  # (n, H)
    weights: np.ndarray  # (n, H+1) cumulative continue products
    discounts: np.ndarray  # (n, H+1): discounts[:, t] gates the t-1 -> t bootstrap
    values_reward: np.ndarray  # (n, H+1)
    values_cost: np.ndarray
    probs_reward: np.ndarray  # (n, H+1, bins) critic caches
    probs_cost: np.ndarray
    q_reward: np.ndarray  # (n, H+1)
    q_cost: np.ndarray
    returns_reward: np.ndarray  # (n, H+1)
    returns_cost: np.ndarray
    discount: float = 0.997
    reward_lambda: float = 0.95
    cost_lambda: float = 0.95


def rollout_with_actor(model, actor: Actor, critic_reward: Critic, critic_cost: Critic,
                       start_obs, horizon: int, noise, discount: float,
                       reward_lambda: float, cost_lambda: float, ctx=None) -> ImaginationTape:
    """Imagined rollout with reparameterised actor actions plus the cached
    quantities (values, returns, continue weights) used by losses."""
    start_obs = np.atleast_2d(np.asarray(start_obs, dtype=np.float64))
    n, obs_dim = start_obs.shape
    a_dim = actor.act_dim

    obs_seq = [start_obs]
    means = np.empty((n, horizon, a_dim))
    raws = np.empty((n, horizon, a_dim))
    log_stds = np.empty((n, horizon, a_dim))
    actions = np.empty((n, horizon, a_dim))
    rewards = np.zeros((n, horizon + 1))
    costs = np.zeros((n, horizon + 1))
    conts = np.ones((n, horizon + 1))
    for t in range(horizon):
        mean, raw = actor.heads(obs_seq[-1])
        log_std = nets.squash_log_std(raw)
        act = nets.gaussian_head_sample(mean, log_std, noise[:, t])
        nxt, rew, cost, cont = model.predict(obs_seq[-1], act, ctx)
        means[:, t], raws[:, t], log_stds[:, t], actions[:, t] = mean, raw, log_std, act
        rewards[:, t] = rew
        costs[:, t] = cost
        conts[:, t + 1] = cont
        obs_seq.append(nxt)
    obs = np.stack(obs_seq, axis=1)
    traj = TrajectoryBatch(obs=obs, actions=actions, rewards=rewards, costs=costs,
                           conts=conts, ctx=None if ctx is None else np.asarray(ctx))

    entropies = log_stds.sum(axis=2) + a_dim * 0.5 * np.log(2 * np.pi * np.e)
    weights = np.cumprod(conts, axis=1)
    discounts = discount * conts

    flat = obs.reshape(n * (horizon + 1), obs_dim)
    v_r, p_r, q_r = critic_reward.values_with_cache(flat)
    v_c, p_c, q_c = critic_cost.values_with_cache(flat)
    shape = (n, horizon + 1)
    tape = ImaginationTape(
        traj=traj, means=means, raws=raws, log_stds=log_stds, noise=noise,
        entropies=entropies, weights=weights, discounts=discounts,
        values_reward=v_r.reshape(shape), values_cost=v_c.reshape(shape),
        probs_reward=p_r.reshape(shape + (-1,)), probs_cost=p_c.reshape(shape + (-1,)),
        q_reward=q_r.reshape(shape), q_cost=q_c.reshape(shape),
        returns_reward=_gated_return(rewards, v_r.reshape(shape), discounts, reward_lambda),
        returns_cost=_gated_return(costs, v_c.reshape(shape), discounts, cost_lambda),
        discount=discount, reward_lambda=reward_lambda, cost_lambda=cost_lambda,
    )
    return tape


def _gated_return(rewards, values, discounts, lam):
    out = np.empty_like(values)
    out[:, -1] = values[:, -1]
    for t in range(rewards.shape[1] - 2, -1, -1):
        out[:, t] = rewards[:, t] + discounts[:, t + 1] * (
            (1.0 - lam) * values[:, t + 1] + lam * out[:, t + 1]
        )
    return out


def _lambda_return_backward(seed, returns, rewards, values, discounts, lam):
    """Reverse pass of _gated_return.

    seed[:, t] is the upstream gradient on returns[:, t]. Returns gradients on
    (rewards, values, conts) where conts are the raw continue probabilities
    inside discounts = discount * conts.
    """
    n, h1 = seed.shape
    h = h1 - 1
    d_rewards = np.zeros((n, h1))
    d_values = np.zeros((n, h1))
    d_disc = np.zeros((n, h1))
    g = np.zeros((n, h1))  # total gradient arriving at returns[:, t]
    g[:, 0] = seed[:, 0]
    for t in range(h):
        # returns[t] = rewards[t] + disc[t+1] * ((1-lam) values[t+1] + lam returns[t+1])
        d_rewards[:, t] = g[:, t]
        d_values[:, t + 1] += g[:, t] * discounts[:, t + 1] * (1.0 - lam)
        boot = (1.0 - lam) * values[:, t + 1] + lam * returns[:, t + 1]
        d_disc[:, t + 1] += g[:, t] * boot
        nxt = seed[:, t + 1] if t + 1 <= h else 0.0
        g[:, t + 1] = nxt + g[:, t] * discounts[:, t + 1] * lam
    d_values[:, h] += g[:, h]  # returns[H] = values[H]
    return d_rewards, d_values, d_disc


@dataclass
class ActorLossResult:
    objective: float  # differentiable scalar whose gradient is `grads`
    grads: nets.GradientRecord
    entropy: float  # mean per-step policy entropy
    mean_return: float
    mean_cost_return: float
    penalty: float = 0.0  # augmented-Lagrangian penalty value (safe loss only)
    reported_loss: float = 0.0  # objective plus the penalty term as printed


def _actor_backward(tape: ImaginationTape, model, actor: Actor,
                    critic_reward: Critic, critic_cost: Critic,
                    d_ret_r, d_ret_c, d_entropy, d_weights, lam_gate: bool, ctx=None):
    """Shared reverse pass: seeds on returns/entropies/weights -> actor grads."""
    traj = tape.traj
    n, h1 = traj.rewards.shape
    h = h1 - 1
    conts = traj.conts

    d_rew, d_vr, d_disc_r = _lambda_return_backward(
        d_ret_r, tape.returns_reward, traj.rewards, tape.values_reward,
        tape.discounts, tape.reward_lambda)
    if lam_gate:
        d_cost, d_vc, d_disc_c = _lambda_return_backward(
            d_ret_c, tape.returns_cost, traj.costs, tape.values_cost,
            tape.discounts, tape.cost_lambda)
    else:
        d_cost = np.zeros((n, h1))
        d_vc = np.zeros((n, h1))
        d_disc_c = np.zeros((n, h1))

    # discounts = discount * conts; weights = cumprod(conts)
    d_cont = tape.discount * (d_disc_r + d_disc_c)
    suffix = np.cumsum((d_weights * tape.weights)[:, ::-1], axis=1)[:, ::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cont_w = np.where(conts > 0, suffix / conts, 0.0)
    d_cont[:, 1:] += cont_w[:, 1:]

    d_log_std = np.zeros((n, h, actor.act_dim))
    d_log_std += d_entropy[:, :, None]

    obs_dim = traj.obs.shape[2]
    actor_grads = nets.zero_grads(actor.params)
    d_obs_next = np.zeros((n, obs_dim))

    for t in range(h - 1, -1, -1):
        s_t = traj.obs[:, t]
        # critic value chains at s_{t+1}
        d_obs_next += critic_reward.input_grads_from_cache(
            traj.obs[:, t + 1], tape.probs_reward[:, t + 1], tape.q_reward[:, t + 1],
            d_vr[:, t + 1])
        if lam_gate:
            d_obs_next += critic_cost.input_grads_from_cache(
                traj.obs[:, t + 1], tape.probs_cost[:, t + 1], tape.q_cost[:, t + 1],
                d_vc[:, t + 1])
        # model inputs at step t
        d_obs_m, d_act = model.backward_inputs(
            s_t, traj.actions[:, t], d_obs_next, d_rew[:, t],
            d_cost=d_cost[:, t] if lam_gate else None,
            d_cont=d_cont[:, t + 1], ctx=ctx)
        # action chain: a = tanh(mean + exp(log_std) * eps)
        a = traj.actions[:, t]
        d_pre = d_act * (1.0 - a**2)
        d_mean = d_pre
        d_ls = d_pre * np.exp(tape.log_stds[:, t]) * tape.noise[:, t] + d_log_std[:, t]
        d_raw = d_ls * nets.squash_log_std_deriv(tape.raws[:, t])
        g_t, d_obs_a = nets.backward(
            actor.params, s_t, np.concatenate([d_mean, d_raw], axis=1))
        actor_grads.add_(g_t)
        d_obs_next = d_obs_m + d_obs_a
    return actor_grads


def actor_loss_reward(tape: ImaginationTape, model, actor: Actor,
                      critic_reward: Critic, critic_cost: Critic,
                      entropy_coef: float, ctx=None) -> ActorLossResult:
    """Reward-and-entropy objective with pathwise gradients through the rollout.

    objective = -(1/n) sum_i sum_{t<H} w[i,t] * (R^lambda[i,t] + eta * H[i,t])
    """
    n, h1 = tape.returns_reward.shape
    h = h1 - 1
    w = tape.weights
    objective = -float(
        np.sum(w[:, :h] * (tape.returns_reward[:, :h] + entropy_coef * tape.entropies))
    ) / n

    d_ret_r = np.zeros((n, h1))
    d_ret_r[:, :h] = -w[:, :h] / n
    d_entropy = -entropy_coef * w[:, :h] / n
    d_weights = np.zeros((n, h1))
    d_weights[:, :h] = -(tape.returns_reward[:, :h] + entropy_coef * tape.entropies) / n

    grads = _actor_backward(tape, model, actor, critic_reward, critic_cost,
                            d_ret_r, np.zeros((n, h1)), d_entropy, d_weights,
                            lam_gate=False, ctx=ctx)
    return ActorLossResult(
        objective=objective, grads=grads,
        entropy=float(tape.entropies.mean()),
        mean_return=float(tape.returns_reward[:, 0].mean()),
        mean_cost_return=float(tape.returns_cost[:, 0].mean()),
        reported_loss=objective,
    )


def actor_loss_safe(tape: ImaginationTape, model, actor: Actor,
                    critic_reward: Critic, critic_cost: Critic,
                    controller: AugmentedLagrangian, entropy_coef: float,
                    cost_limit: float, ctx=None,
                    update_multiplier: bool = True) -> ActorLossResult:
    """Constrained objective: the reward/entropy terms plus the multiplier-
    weighted cost return, with the augmented penalty tracked on the side.

    The penalty value is computed from the two-branch rule on the mean
    constraint gap but, matching the printed stop-gradient on the cost
    return, contributes no pathwise term; the differentiable cost pressure
    is lam * C^lambda. The multiplier update consumes the mean gap.
    """
    n, h1 = tape.returns_reward.shape
    h = h1 - 1
    w = tape.weights
    lam = controller.lam
    per_step = (
        tape.returns_reward[:, :h]
        + entropy_coef * tape.entropies
        - lam * tape.returns_cost[:, :h]
    )
    objective = -float(np.sum(w[:, :h] * per_step)) / n

    d_ret_r = np.zeros((n, h1))
    d_ret_r[:, :h] = -w[:, :h] / n
    d_ret_c = np.zeros((n, h1))
    d_ret_c[:, :h] = lam * w[:, :h] / n
    d_entropy = -entropy_coef * w[:, :h] / n
    d_weights = np.zeros((n, h1))
    d_weights[:, :h] = -per_step / n

    grads = _actor_backward(tape, model, actor, critic_reward, critic_cost,
                            d_ret_r, d_ret_c, d_entropy, d_weights,
                            lam_gate=True, ctx=ctx)

    gap = float(tape.returns_cost[:, :h].mean() - cost_limit)
    if update_multiplier:
        penalty = controller.penalty_and_update(gap)
    else:
        penalty = controller.penalty_value(gap)
    return ActorLossResult(
        objective=objective, grads=grads,
        entropy=float(tape.entropies.mean()),
        mean_return=float(tape.returns_reward[:, 0].mean()),
        mean_cost_return=float(tape.returns_cost[:, 0].mean()),
        penalty=penalty,
        reported_loss=objective + penalty,
    )

"""World models for imagination rollouts: an exact oracle wrapping the 2D
surrogate dynamics and a learned one-step MLP model.

Both expose the same batched interface:

    predict(obs, action, ctx)          -> (next_obs, reward, cost, cont)
    backward_inputs(obs, action, ...)  -> (d_obs, d_action)

`ctx` carries per-row episode ids so the oracle can look up the right layout
when imagining from replayed states; the learned model ignores it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env2d, nets


class ModelError(RuntimeError):
    """Raised when a model cannot interpret its inputs."""


@dataclass
class TransitionBatch:
    """Flat arrays of transitions (sequence structure handled by the sampler)."""

    obs: np.ndarray  # (n, obs_dim)
    action: np.ndarray  # (n, act_dim)
    next_obs: np.ndarray  # (n, obs_dim)
    reward: np.ndarray  # (n,)
    cost: np.ndarray  # (n,)
    cont: np.ndarray  # (n,)
    episode: np.ndarray | None = None  # (n,) int episode ids

    def __len__(self):
        return self.obs.shape[0]


@dataclass
class TrajectoryBatch:
    """Imagined H-step rollout.

    rewards[_, t] and costs[_, t] are produced by action t taken at state t
    (entry H is zero padding so the arrays align with the lambda-return
    recurrence, which bootstraps the tail from the value at the last state).
    conts[_, t] is the predicted probability that the episode is still alive
    at state t (entry 0 is always 1)."""

    obs: np.ndarray  # (n, H+1, obs_dim)
    actions: np.ndarray  # (n, H, act_dim)
    rewards: np.ndarray  # (n, H+1)
    costs: np.ndarray  # (n, H+1)
    conts: np.ndarray  # (n, H+1)
    ctx: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# -- exact oracle ---------------------------------------------------------------


class OracleModel:
    """Ground-truth model: reconstructs the agent state from an observation and
    replays the true surrogate dynamics. Predictions on a trajectory replayed
    with the source layout are bit-identical to the real environment."""

    def __init__(self, layouts):
        """layouts: a single Layout or a dict {episode_id: Layout}."""
        if isinstance(layouts, env2d.Layout):
            self._layouts = {0: layouts}
            self._single = True
        else:
            self._layouts = dict(layouts)
            self._single = False

    def register(self, episode_id: int, layout: env2d.Layout) -> None:
        self._layouts[episode_id] = layout

    def _groups(self, n, ctx):
        if ctx is None:
            if not self._single and len(self._layouts) != 1:
                raise ModelError("oracle with multiple layouts requires ctx episode ids")
            only = next(iter(self._layouts.values()))
            yield only, np.arange(n)
            return
        ctx = np.asarray(ctx)
        for eid in np.unique(ctx):
            if int(eid) not in self._layouts:
                raise ModelError(f"no layout registered for episode {int(eid)}")
            yield self._layouts[int(eid)], np.nonzero(ctx == eid)[0]

    @staticmethod
    def _match_goals(layout, obs, rows):
        """Recover goal indices by matching the egocentric goal vector."""
        x, y = obs[rows, 0], obs[rows, 1]
        c, s = np.cos(obs[rows, 2]), np.sin(obs[rows, 2])
        gx = layout.goal_seq[None, :, 0] - x[:, None]
        gy = layout.goal_seq[None, :, 1] - y[:, None]
        ego_x = c[:, None] * gx + s[:, None] * gy
        ego_y = -s[:, None] * gx + c[:, None] * gy
        err = (ego_x - obs[rows, 5][:, None]) ** 2 + (ego_y - obs[rows, 6][:, None]) ** 2
        idx = np.argmin(err, axis=1)
        best = err[np.arange(rows.size), idx]
        if np.any(best > 1e-12):
            raise ModelError("observation does not match any goal in the layout")
        return idx

    def predict(self, obs, action, ctx=None):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        action = np.atleast_2d(np.asarray(action, dtype=np.float64))
        n = obs.shape[0]
        next_obs = np.empty_like(obs)
        reward = np.empty(n)
        cost = np.empty(n)
        for layout, rows in self._groups(n, ctx):
            gi = self._match_goals(layout, obs, rows)
            nx, ny, nh, ngi, rew, cst = env2d.kinematic_step(
                layout, obs[rows, 0], obs[rows, 1], obs[rows, 2], gi, action[rows]
            )
            next_obs[rows] = env2d.observe(layout, nx, ny, nh, ngi)
            reward[rows] = rew
            cost[rows] = cst
        # step counters are not observable: the time limit is treated as
        # truncation, so the oracle always predicts continuation
        return next_obs, reward, cost, np.ones(n)

    def backward_inputs(self, obs, action, d_next_obs, d_reward, d_cost=None, d_cont=None, ctx=None):
        """Analytic input-gradients of (next_obs, reward) wrt (obs, action).

        Discrete events (goal switches, hazard membership, which hazards are
        nearest, clipping at walls) are locally constant and contribute zero.
        Only obs[:, 0:3] (pose) carries gradient; the remaining observation
        features are reconstructed from it and the layout.
        """
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        action = np.atleast_2d(np.asarray(action, dtype=np.float64))
        d_next_obs = np.atleast_2d(np.asarray(d_next_obs, dtype=np.float64))
        d_reward = np.asarray(d_reward, dtype=np.float64)
        n = obs.shape[0]
        d_obs = np.zeros_like(obs)
        d_action = np.zeros_like(action)

        for layout, rows in self._groups(n, ctx):
            cfg = layout.config
            half = cfg.half
            x, y, th = obs[rows, 0], obs[rows, 1], obs[rows, 2]
            a = np.clip(action[rows], -1.0, 1.0)
            a0_free = np.abs(action[rows, 0]) < 1.0
            a1_free = np.abs(action[rows, 1]) < 1.0

            gi = self._match_goals(layout, obs, rows)
            goal = layout.goal_seq[gi]
            th1 = th + cfg.omega_max * a[:, 0]
            c1, s1 = np.cos(th1), np.sin(th1)
            raw_x = x + cfg.v_max * a[:, 1] * c1
            raw_y = y + cfg.v_max * a[:, 1] * s1
            x1 = np.clip(raw_x, -half, half)
            y1 = np.clip(raw_y, -half, half)
            free_x = np.abs(raw_x) < half
            free_y = np.abs(raw_y) < half

            prev_d = np.hypot(goal[:, 0] - x, goal[:, 1] - y)
            new_d = np.hypot(goal[:, 0] - x1, goal[:, 1] - y1)
            entered = new_d <= cfg.goal_radius
            gi1 = np.where(entered, np.minimum(gi + 1, len(layout.goal_seq) - 1), gi)
            goal1 = layout.goal_seq[gi1]

            up = d_next_obs[rows]
            dr = d_reward[rows]

            # accumulate gradient on the post-step pose (x1, y1, th1)
            dx1 = up[:, 0].copy()
            dy1 = up[:, 1].copy()
            dth1 = up[:, 2] - s1 * up[:, 3] + c1 * up[:, 4]

            def ego_pair_grads(tx, ty, u_ex, u_ey):
                """Gradient contribution of one egocentric pair at target (tx, ty)."""
                rx, ry = tx - x1, ty - y1
                ex = c1 * rx + s1 * ry
                ey = -s1 * rx + c1 * ry
                ddx = -c1 * u_ex + s1 * u_ey
                ddy = -s1 * u_ex - c1 * u_ey
                ddth = ey * u_ex - ex * u_ey
                return ddx, ddy, ddth

            gdx, gdy, gdth = ego_pair_grads(goal1[:, 0], goal1[:, 1], up[:, 5], up[:, 6])
            dx1 += gdx
            dy1 += gdy
            dth1 += gdth

            if layout.hazards.shape[0]:
                hx = layout.hazards[None, :, 0] - x1[:, None]
                hy = layout.hazards[None, :, 1] - y1[:, None]
                order = np.argsort(np.hypot(hx, hy), axis=1, kind="stable")[:, : cfg.obs_hazards]
                sel = layout.hazards[order]  # (rows, k, 2)
                for j in range(sel.shape[1]):
                    hdx, hdy, hdth = ego_pair_grads(
                        sel[:, j, 0], sel[:, j, 1], up[:, 7 + 2 * j], up[:, 8 + 2 * j]
                    )
                    dx1 += hdx
                    dy1 += hdy
                    dth1 += hdth

            # reward = prev_d - new_d (+ constant bonus)
            safe_new = np.where(new_d > 1e-12, new_d, 1.0)
            dx1 += dr * (goal[:, 0] - x1) / safe_new * (new_d > 1e-12)
            dy1 += dr * (goal[:, 1] - y1) / safe_new * (new_d > 1e-12)
            safe_prev = np.where(prev_d > 1e-12, prev_d, 1.0)
            drdx = dr * (x - goal[:, 0]) / safe_prev * (prev_d > 1e-12)
            drdy = dr * (y - goal[:, 1]) / safe_prev * (prev_d > 1e-12)

            # chain through the kinematics
            dx1 = dx1 * free_x
            dy1 = dy1 * free_y
            dth1 += dx1 * (-cfg.v_max * a[:, 1] * s1) + dy1 * (cfg.v_max * a[:, 1] * c1)
            d_obs[rows, 0] = dx1 + drdx
            d_obs[rows, 1] = dy1 + drdy
            d_obs[rows, 2] = dth1
            d_action[rows, 0] = dth1 * cfg.omega_max * a0_free
            d_action[rows, 1] = (dx1 * c1 + dy1 * s1) * cfg.v_max * a1_free
        return d_obs, d_action


# -- learned model ----------------------------------------------------------------


@dataclass
class ModelLossBreakdown:
    obs_nll: float
    reward_nll: float
    cost_nll: float
    cont_nll: float
    total: float


class LearnedModel:
    """One-step MLP model over raw observations.

    A shared trunk maps (obs, action) to a combined head vector: next-obs
    delta, reward, cost logit and continue logit. The cost head is a Bernoulli
    classifier (costs here are 0/1) read as expected cost at planning time.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, layers: int,
                 rng: np.random.Generator, coefficients=(1.0, 1.0, 1.0, 1.0)):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        sizes = [obs_dim + act_dim] + [hidden] * layers + [obs_dim + 3]
        self.params = nets.init_mlp(sizes, rng)
        self.coefficients = coefficients  # (beta_obs, beta_reward, beta_cost, beta_cont)

    def _heads(self, y):
        o = self.obs_dim
        return y[:, :o], y[:, o], y[:, o + 1], y[:, o + 2]

    def predict(self, obs, action, ctx=None):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        action = np.atleast_2d(np.asarray(action, dtype=np.float64))
        y = nets.forward(self.params, np.concatenate([obs, action], axis=1))
        delta, rew, cost_logit, cont_logit = self._heads(y)
        return obs + delta, rew, _sigmoid(cost_logit), _sigmoid(cont_logit)

    def backward_inputs(self, obs, action, d_next_obs, d_reward, d_cost=None, d_cont=None, ctx=None):
        """Input-gradients of (next_obs, reward, cost, cont) wrt (obs, action)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        action = np.atleast_2d(np.asarray(action, dtype=np.float64))
        x = np.concatenate([obs, action], axis=1)
        y = nets.forward(self.params, x)
        _, _, cost_logit, cont_logit = self._heads(y)
        o = self.obs_dim
        dy = np.zeros_like(y)
        dy[:, :o] = d_next_obs
        dy[:, o] = d_reward
        if d_cost is not None:
            p = _sigmoid(cost_logit)
            dy[:, o + 1] = d_cost * p * (1.0 - p)
        if d_cont is not None:
            p = _sigmoid(cont_logit)
            dy[:, o + 2] = d_cont * p * (1.0 - p)
        _, dx = nets.backward(self.params, x, dy)
        d_obs = dx[:, :o] + np.asarray(d_next_obs, dtype=np.float64)  # skip connection
        return d_obs, dx[:, o:]

    def loss_and_grads(self, batch: TransitionBatch):
        """Decoder negative log-likelihoods and parameter gradients.

        Observation and reward heads use unit-variance Gaussian NLL (constants
        dropped), cost and continue heads Bernoulli NLL; each component is a
        mean over the batch and the total is their coefficient-weighted sum.
        """
        n = len(batch)
        x = np.concatenate([batch.obs, batch.action], axis=1)
        y = nets.forward(self.params, x)
        delta, rew, cost_logit, cont_logit = self._heads(y)

        d_err = delta - (batch.next_obs - batch.obs)
        r_err = rew - batch.reward
        obs_nll = 0.5 * float(np.sum(d_err**2)) / n
        reward_nll = 0.5 * float(np.sum(r_err**2)) / n
        # stable BCE from logits: softplus(z) - z*t
        cost_nll = float(np.sum(np.logaddexp(0.0, cost_logit) - cost_logit * batch.cost)) / n
        cont_nll = float(np.sum(np.logaddexp(0.0, cont_logit) - cont_logit * batch.cont)) / n
        bo, br, bc, bu = self.coefficients
        total = bo * obs_nll + br * reward_nll + bc * cost_nll + bu * cont_nll
        if not np.isfinite(total):
            per_row = np.sum(d_err**2, axis=1) + r_err**2
            bad = int(np.argmax(~np.isfinite(per_row)))
            raise FloatingPointError(f"non-finite model loss at batch index {bad}")

        o = self.obs_dim
        dy = np.zeros_like(y)
        dy[:, :o] = bo * d_err / n
        dy[:, o] = br * r_err / n
        dy[:, o + 1] = bc * (_sigmoid(cost_logit) - batch.cost) / n
        dy[:, o + 2] = bu * (_sigmoid(cont_logit) - batch.cont) / n
        grads, _ = nets.backward(self.params, x, dy)
        breakdown = ModelLossBreakdown(obs_nll, reward_nll, cost_nll, cont_nll, total)
        return breakdown, grads


# -- imagination -------------------------------------------------------------------


def imagine(model, start_obs, policy_or_actions, horizon: int, ctx=None) -> TrajectoryBatch:
    """Roll the model forward H steps from a batch of start observations.

    policy_or_actions is either a callable obs_batch -> action_batch
    (closed loop) or an explicit (n, H, act_dim) action array (open loop).
    """
    start_obs = np.atleast_2d(np.asarray(start_obs, dtype=np.float64))
    n = start_obs.shape[0]
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    open_loop = isinstance(policy_or_actions, np.ndarray)

    obs_seq = [start_obs]
    act_seq, rew_seq, cost_seq, cont_seq = [], [], [], []
    for t in range(horizon):
        a = policy_or_actions[:, t] if open_loop else np.atleast_2d(
            np.asarray(policy_or_actions(obs_seq[-1]))
        )
        nxt, rew, cost, cont = model.predict(obs_seq[-1], a, ctx)
        obs_seq.append(nxt)
        act_seq.append(a)
        rew_seq.append(rew)
        cost_seq.append(cost)
        cont_seq.append(cont)

    zeros = np.zeros((n, 1))
    ones = np.ones((n, 1))
    return TrajectoryBatch(
        obs=np.stack(obs_seq, axis=1),
        actions=np.stack(act_seq, axis=1),
        rewards=np.concatenate([np.stack(rew_seq, axis=1), zeros], axis=1),
        costs=np.concatenate([np.stack(cost_seq, axis=1), zeros], axis=1),
        conts=np.concatenate([ones, np.stack(cont_seq, axis=1)], axis=1),
        ctx=None if ctx is None else np.asarray(ctx),
    )

"""2D point-navigation surrogate: turn/thrust agent, circular hazards, resampling goal.

All step arithmetic lives in vectorised pure functions shared with the exact
world-model oracle, so oracle rollouts reproduce real episodes bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LayoutError(RuntimeError):
    """Raised when a feasible layout cannot be sampled."""


@dataclass(frozen=True)
class EnvConfig:
    arena_size: float = 4.0  # side length, centered on the origin
    hazard_count: int = 4
    hazard_radius: float = 0.4
    goal_radius: float = 0.3
    v_max: float = 0.1  # meters per step at full thrust
    omega_max: float = 0.4  # radians per step at full turn
    episode_length: int = 300
    obs_hazards: int = 4  # k nearest hazards in the observation

    @property
    def half(self) -> float:
        return self.arena_size / 2.0

    @property
    def obs_dim(self) -> int:
        # x, y, heading, cos, sin, goal-relative (2), k hazard-relative pairs
        return 7 + 2 * self.obs_hazards


@dataclass
class Layout:
    """Static episode geometry plus the pregenerated goal sequence."""

    config: EnvConfig
    seed: int
    hazards: np.ndarray  # (n_hazards, 2)
    goal_seq: np.ndarray  # (n_goals, 2); goal_seq[i] is the (i+1)-th goal


@dataclass
class EnvState:
    layout: Layout
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    goal_idx: int = 0
    step_count: int = 0


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    reward: float
    cost: float
    cont: float


_SPAWN_CLEARANCE = 0.3  # extra margin between hazards and the agent spawn
_HAZARD_GAP = 0.1  # minimum edge-to-edge hazard separation
_GOAL_HAZARD_GAP = 0.05
_MIN_GOAL_SPAWN_DIST = 0.5
_MAX_PLACEMENT_TRIES = 500


def make_layout(config: EnvConfig, seed: int) -> Layout:
    """Sample hazards and a goal sequence; deterministic under seed."""
    rng = np.random.default_rng(seed)
    half = config.half
    r_h, r_g = config.hazard_radius, config.goal_radius

    hazards = np.zeros((config.hazard_count, 2))
    for i in range(config.hazard_count):
        for attempt in range(_MAX_PLACEMENT_TRIES):
            c = rng.uniform(-half + r_h, half - r_h, size=2)
            if np.hypot(c[0], c[1]) < r_h + _SPAWN_CLEARANCE:
                continue
            if i and np.min(np.hypot(*(hazards[:i] - c).T)) < 2 * r_h + _HAZARD_GAP:
                continue
            hazards[i] = c
            break
        else:
            raise LayoutError(f"could not place hazard {i} after {_MAX_PLACEMENT_TRIES} tries")

    n_goals = config.episode_length + 64
    goal_seq = np.zeros((n_goals, 2))
    for i in range(n_goals):
        for attempt in range(_MAX_PLACEMENT_TRIES):
            g = rng.uniform(-half + r_g, half - r_g, size=2)
            if np.hypot(g[0], g[1]) < _MIN_GOAL_SPAWN_DIST:
                continue
            if config.hazard_count and np.min(np.hypot(*(hazards - g).T)) < r_h + r_g + _GOAL_HAZARD_GAP:
                continue
            goal_seq[i] = g
            break
        else:
            raise LayoutError(f"could not place goal {i} after {_MAX_PLACEMENT_TRIES} tries")

    return Layout(config=config, seed=seed, hazards=hazards, goal_seq=goal_seq)


def reset(config: EnvConfig, seed: int):
    """New episode: agent at the origin with heading 0. Returns (state, obs)."""
    layout = make_layout(config, seed)
    state = EnvState(layout=layout)
    return state, observe(layout, np.array([0.0]), np.array([0.0]), np.array([0.0]), np.array([0]))[0]


# -- vectorised core shared with the oracle -----------------------------------


def kinematic_step(layout: Layout, x, y, heading, goal_idx, action):
    """Advance (x, y, heading, goal_idx) by one step for a batch of agents.

    action[:, 0] turns, action[:, 1] thrusts; both are clamped to [-1, 1].
    Returns (x', y', heading', goal_idx', reward, cost) as arrays.
    """
    cfg = layout.config
    a = np.clip(action, -1.0, 1.0)
    goal = layout.goal_seq[goal_idx]

    prev_dist = np.hypot(goal[:, 0] - x, goal[:, 1] - y)
    new_heading = heading + cfg.omega_max * a[:, 0]
    half = cfg.half
    new_x = np.clip(x + cfg.v_max * a[:, 1] * np.cos(new_heading), -half, half)
    new_y = np.clip(y + cfg.v_max * a[:, 1] * np.sin(new_heading), -half, half)
    new_dist = np.hypot(goal[:, 0] - new_x, goal[:, 1] - new_y)

    reward = prev_dist - new_dist
    entered = new_dist <= cfg.goal_radius
    reward = reward + np.where(entered, 1.0, 0.0)
    new_goal_idx = np.where(
        entered, np.minimum(goal_idx + 1, len(layout.goal_seq) - 1), goal_idx
    )

    if layout.hazards.shape[0]:
        dh = np.hypot(
            layout.hazards[None, :, 0] - new_x[:, None],
            layout.hazards[None, :, 1] - new_y[:, None],
        )
        cost = (dh.min(axis=1) <= cfg.hazard_radius).astype(np.float64)
    else:
        cost = np.zeros_like(new_x)
    return new_x, new_y, new_heading, new_goal_idx, reward, cost


def observe(layout: Layout, x, y, heading, goal_idx) -> np.ndarray:
    """Observation batch (n, obs_dim) for agents at the given poses."""
    cfg = layout.config
    n = x.shape[0]
    c, s = np.cos(heading), np.sin(heading)
    goal = layout.goal_seq[goal_idx]
    gx, gy = goal[:, 0] - x, goal[:, 1] - y

    obs = np.empty((n, cfg.obs_dim))
    obs[:, 0] = x
    obs[:, 1] = y
    obs[:, 2] = heading
    obs[:, 3] = c
    obs[:, 4] = s
    obs[:, 5] = c * gx + s * gy
    obs[:, 6] = -s * gx + c * gy

    k = cfg.obs_hazards
    pad = 2.0 * cfg.arena_size
    if layout.hazards.shape[0]:
        hx = layout.hazards[None, :, 0] - x[:, None]
        hy = layout.hazards[None, :, 1] - y[:, None]
        order = np.argsort(np.hypot(hx, hy), axis=1, kind="stable")[:, :k]
        rows = np.arange(n)[:, None]
        hx, hy = hx[rows, order], hy[rows, order]
        m = hx.shape[1]
        obs[:, 7 : 7 + 2 * m : 2] = c[:, None] * hx + s[:, None] * hy
        obs[:, 8 : 8 + 2 * m : 2] = -s[:, None] * hx + c[:, None] * hy
    else:
        m = 0
    if m < k:
        obs[:, 7 + 2 * m :: 2] = pad
        obs[:, 8 + 2 * m :: 2] = 0.0
    return obs


def step(state: EnvState, action) -> Transition:
    """Advance an episode by one step; mutates `state` and returns the transition."""
    layout = state.layout
    obs = observe(
        layout,
        np.array([state.x]),
        np.array([state.y]),
        np.array([state.heading]),
        np.array([state.goal_idx]),
    )[0]
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    nx, ny, nh, ngi, rew, cost = kinematic_step(
        layout,
        np.array([state.x]),
        np.array([state.y]),
        np.array([state.heading]),
        np.array([state.goal_idx]),
        a[None, :],
    )
    state.x, state.y, state.heading = float(nx[0]), float(ny[0]), float(nh[0])
    state.goal_idx = int(ngi[0])
    state.step_count += 1
    next_obs = observe(layout, nx, ny, nh, ngi)[0]
    cont = 0.0 if state.step_count >= layout.config.episode_length else 1.0
    return Transition(
        obs=obs,
        action=a,
        next_obs=next_obs,
        reward=float(rew[0]),
        cost=float(cost[0]),
        cont=cont,
    )


# -- layout persistence --------------------------------------------------------


def dump_layout(layout: Layout, path) -> None:
    """Write the layout as a structured text record (hex floats, replayable)."""
    cfg = layout.config
    lines = [
        "env2d-layout v1",
        f"seed = {layout.seed}",
        f"arena_size = {cfg.arena_size!r}",
        f"hazard_radius = {cfg.hazard_radius!r}",
        f"goal_radius = {cfg.goal_radius!r}",
        f"v_max = {cfg.v_max!r}",
        f"omega_max = {cfg.omega_max!r}",
        f"episode_length = {cfg.episode_length}",
        f"obs_hazards = {cfg.obs_hazards}",
    ]
    for h in layout.hazards:
        lines.append(f"hazard = {h[0].hex()} {h[1].hex()}")
    for g in layout.goal_seq:
        lines.append(f"goal = {g[0].hex()} {g[1].hex()}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_layout(path) -> Layout:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "env2d-layout v1":
        raise ValueError(f"not an env2d layout file: {path}")
    fields = {}
    hazards, goals = [], []
    for line in lines[1:]:
        key, _, value = line.partition(" = ")
        if key == "hazard":
            hazards.append([float.fromhex(v) for v in value.split()])
        elif key == "goal":
            goals.append([float.fromhex(v) for v in value.split()])
        else:
            fields[key] = value
    hazards_arr = np.array(hazards) if hazards else np.zeros((0, 2))
    cfg = EnvConfig(
        arena_size=float(fields["arena_size"]),
        hazard_count=hazards_arr.shape[0],
        hazard_radius=float(fields["hazard_radius"]),
        goal_radius=float(fields["goal_radius"]),
        v_max=float(fields["v_max"]),
        omega_max=float(fields["omega_max"]),
        episode_length=int(fields["episode_length"]),
        obs_hazards=int(fields["obs_hazards"]),
    )
    return Layout(
        config=cfg, seed=int(fields["seed"]), hazards=hazards_arr, goal_seq=np.array(goals)
    )

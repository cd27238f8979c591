"""Native continuous-control environments plus rollout and evaluation harnesses.

Both environments expose the usual reset/step cycle and, for the Monte-Carlo
critic, state injection (`set_state`) and a vectorized `step_batch` used to
roll many hypothetical episodes in lockstep. Scalar `step` delegates to
`step_batch`, so the two paths share one set of dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError, InvalidStateError

SIMPLEGOAL_STEP_SCALE = 0.1
SIMPLEGOAL_GOAL_CENTER = np.array([0.05, 0.05])
SIMPLEGOAL_MAX_STEPS = 50

MC_POWER = 0.0015
MC_GRAVITY = 0.0025
MC_MAX_SPEED = 0.07
MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_GOAL_POSITION = 0.45
MC_MAX_STEPS = 999


class Environment:
    """Base for resettable, steppable simulations with bounded states/actions."""

    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    observation_low: np.ndarray
    observation_high: np.ndarray
    max_steps: int
    state_var_names: tuple
    action_var_names: tuple

    def __init__(self):
        self._state = None
        self._steps = 0
        self._done = False
        self._rng = np.random.default_rng()

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state = self._sample_start(self._rng)
        self._steps = 0
        self._done = False
        return self._state.copy()

    def set_state(self, state) -> None:
        """Inject a state and start a fresh episode from it."""
        state = np.asarray(state, dtype=float)
        if state.shape != (self.state_dim,):
            raise DimensionMismatchError(f"state shape {state.shape}, expected ({self.state_dim},)")
        self._state = state.copy()
        self._steps = 0
        self._done = False

    def step(self, action):
        """Advance one step: returns (state, reward, terminated, truncated)."""
        if self._state is None:
            raise InvalidStateError("reset() must be called before step()")
        if self._done:
            raise InvalidStateError("step() called on a finished episode")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape != (self.action_dim,):
            raise DimensionMismatchError(f"action shape {action.shape}, expected ({self.action_dim},)")
        nxt, reward, terminated = self.step_batch(self._state[None, :], action[None, :])
        self._state = nxt[0]
        self._steps += 1
        terminated = bool(terminated[0])
        truncated = not terminated and self._steps >= self.max_steps
        self._done = terminated or truncated
        return self._state.copy(), float(reward[0]), terminated, truncated

    def _sample_start(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def step_batch(states: np.ndarray, actions: np.ndarray):
        """Pure vectorized dynamics: (states, actions) -> (next, rewards, terminated)."""
        raise NotImplementedError


class SimpleGoalEnv(Environment):
    """Navigation in the unit square toward the corner goal, past a central pitfall.

    The position moves by 0.1 times the (clipped) action each step and is
    clamped to the square. Progress toward the goal center pays 10 times the
    distance decrease per step; entering the pitfall square ends the episode
    with reward -10, entering the goal square ends it with reward +10, and
    episodes truncate after 50 steps.
    """

    name = "simplegoal"
    state_dim = 2
    action_dim = 2
    action_low = np.array([-1.0, -1.0])
    action_high = np.array([1.0, 1.0])
    observation_low = np.array([0.0, 0.0])
    observation_high = np.array([1.0, 1.0])
    max_steps = SIMPLEGOAL_MAX_STEPS
    state_var_names = ("x", "y")
    action_var_names = ("dx", "dy")

    @staticmethod
    def in_goal(p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (p[..., 0] < 0.1) & (p[..., 1] < 0.1)

    @staticmethod
    def in_pitfall(p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (
            (p[..., 0] > 0.4) & (p[..., 0] < 0.6)
            & (p[..., 1] > 0.4) & (p[..., 1] < 0.6)
        )

    def _sample_start(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            p = rng.uniform(0.0, 1.0, size=2)
            if not self.in_goal(p) and not self.in_pitfall(p):
                return p

    @staticmethod
    def step_batch(states, actions):
        states = np.asarray(states, dtype=float)
        actions = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
        old_d = np.linalg.norm(states - SIMPLEGOAL_GOAL_CENTER, axis=1)
        nxt = np.clip(states + SIMPLEGOAL_STEP_SCALE * actions, 0.0, 1.0)
        new_d = np.linalg.norm(nxt - SIMPLEGOAL_GOAL_CENTER, axis=1)

        pit = SimpleGoalEnv.in_pitfall(nxt)
        goal = ~pit & SimpleGoalEnv.in_goal(nxt)
        rewards = 10.0 * (old_d - new_d)
        rewards[pit] = -10.0
        rewards[goal] = 10.0
        return nxt, rewards, pit | goal


class MountainCarEnv(Environment):
    """Continuous mountain car: the canonical underpowered-car-on-a-hill task.

    Velocity integrates the applied force (scaled by 0.0015) minus the slope
    term 0.0025*cos(3x); position integrates velocity. Both are clamped to
    their bounds and the left wall absorbs momentum. Each step costs
    0.1*force^2; reaching x >= 0.45 with non-negative velocity pays +100 and
    ends the episode. Truncation after 999 steps.
    """

    name = "mountaincar"
    state_dim = 2
    action_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    observation_low = np.array([MC_MIN_POSITION, -MC_MAX_SPEED])
    observation_high = np.array([MC_MAX_POSITION, MC_MAX_SPEED])
    max_steps = MC_MAX_STEPS
    state_var_names = ("x", "v")
    action_var_names = ("F",)

    def _sample_start(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    @staticmethod
    def step_batch(states, actions):
        states = np.asarray(states, dtype=float)
        force = np.clip(np.asarray(actions, dtype=float).reshape(len(states)), -1.0, 1.0)
        pos = states[:, 0]
        vel = states[:, 1]

        new_vel = vel + force * MC_POWER - MC_GRAVITY * np.cos(3.0 * pos)
        new_vel = np.clip(new_vel, -MC_MAX_SPEED, MC_MAX_SPEED)
        new_pos = np.clip(pos + new_vel, MC_MIN_POSITION, MC_MAX_POSITION)
        new_vel = np.where((new_pos == MC_MIN_POSITION) & (new_vel < 0.0), 0.0, new_vel)

        terminated = (new_pos >= MC_GOAL_POSITION) & (new_vel >= 0.0)
        rewards = -0.1 * force * force + np.where(terminated, 100.0, 0.0)
        return np.stack([new_pos, new_vel], axis=1), rewards, terminated


_ENV_REGISTRY = {
    "simplegoal": SimpleGoalEnv,
    "mountaincar": MountainCarEnv,
    "mountaincarcontinuous": MountainCarEnv,
}


def make_env(name: str) -> Environment:
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key not in _ENV_REGISTRY:
        raise InvalidArgumentError(
            f"unknown environment {name!r}; available: {sorted(set(_ENV_REGISTRY))}"
        )
    return _ENV_REGISTRY[key]()


@dataclass
class Episode:
    states: np.ndarray    # (T, state_dim): state observed before each action
    actions: np.ndarray   # (T, action_dim)

    def __len__(self):
        return len(self.states)


@dataclass
class DatasetMeta:
    env: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray = None
    action_high: np.ndarray = None
    teacher: str = "unknown"
    seed: int = 0

    def __post_init__(self):
        if self.action_low is None:
            self.action_low = -np.ones(self.action_dim)
        if self.action_high is None:
            self.action_high = np.ones(self.action_dim)
        self.action_low = np.asarray(self.action_low, dtype=float)
        self.action_high = np.asarray(self.action_high, dtype=float)


@dataclass
class Dataset:
    episodes: list
    meta: DatasetMeta

    def __post_init__(self):
        for i, ep in enumerate(self.episodes):
            if ep.states.shape[1] != self.meta.state_dim or ep.actions.shape[1] != self.meta.action_dim:
                raise DimensionMismatchError(f"episode {i} does not match dataset metadata dims")

    @property
    def n_pairs(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def all_states(self) -> np.ndarray:
        return np.concatenate([ep.states for ep in self.episodes], axis=0)

    def all_actions(self) -> np.ndarray:
        return np.concatenate([ep.actions for ep in self.episodes], axis=0)

    @property
    def first_state(self) -> np.ndarray:
        return self.episodes[0].states[0].copy()


@dataclass
class EvalSummary:
    mean_return: float
    std_return: float
    n_episodes: int
    per_episode_returns: list = field(default_factory=list)


def _summary(returns) -> EvalSummary:
    arr = np.asarray(returns, dtype=float)
    return EvalSummary(
        mean_return=float(arr.mean()),
        std_return=float(arr.std()),
        n_episodes=len(arr),
        per_episode_returns=[float(r) for r in arr],
    )


def _run_episode(env: Environment, policy, seed, record: bool):
    state = env.reset(seed)
    states, actions = [], []
    ret = 0.0
    while True:
        action = np.asarray(policy(state), dtype=float).reshape(-1)
        if record:
            states.append(state.copy())
            actions.append(action.copy())
        state, reward, terminated, truncated = env.step(action)
        ret += reward
        if terminated or truncated:
            break
    if record:
        return ret, Episode(np.array(states), np.array(actions))
    return ret, None


def rollout(env: Environment, policy, n_episodes: int, seed: int, teacher_id: str = "unknown"):
    """Collect `n_episodes` of (state, action) pairs under `policy`.

    Episode i resets with seed + i, so a dataset is replayable by feeding its
    recorded actions back through an identically seeded environment.
    Returns (Dataset, EvalSummary) with undiscounted episode returns.
    """
    if n_episodes < 1:
        raise InvalidArgumentError("n_episodes must be >= 1")
    episodes, returns = [], []
    for i in range(n_episodes):
        ret, ep = _run_episode(env, policy, seed + i, record=True)
        episodes.append(ep)
        returns.append(ret)
    meta = DatasetMeta(
        env=env.name, state_dim=env.state_dim, action_dim=env.action_dim,
        action_low=env.action_low.copy(), action_high=env.action_high.copy(),
        teacher=teacher_id, seed=seed,
    )
    return Dataset(episodes, meta), _summary(returns)


def evaluate(env: Environment, policy, n_episodes: int, seed: int) -> EvalSummary:
    """Mean/std undiscounted return of `policy` over seeded episodes."""
    if n_episodes < 1:
        raise InvalidArgumentError("n_episodes must be >= 1")
    returns = [_run_episode(env, policy, seed + i, record=False)[0] for i in range(n_episodes)]
    return _summary(returns)

"""Environment access for dataset rollouts.

Uses gymnasium when it is installed; otherwise falls back to built-in
implementations of the supported benchmark dynamics, so datasets can be
exported on machines without the simulation stack.
"""

from __future__ import annotations

import math

import numpy as np

from .loader import ExportError


class _BuiltinMountainCarContinuous:
    """Canonical continuous mountain car, matching the benchmark definition."""

    obs_dim = 2
    act_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    max_steps = 999

    def __init__(self):
        self._pos = 0.0
        self._vel = 0.0
        self._steps = 0
        self._rng = np.random.default_rng()

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._pos = float(self._rng.uniform(-0.6, -0.4))
        self._vel = 0.0
        self._steps = 0
        return np.array([self._pos, self._vel])

    def step(self, action):
        force = min(max(float(np.asarray(action).ravel()[0]), -1.0), 1.0)
        self._vel += force * 0.0015 - 0.0025 * math.cos(3 * self._pos)
        self._vel = min(max(self._vel, -0.07), 0.07)
        self._pos += self._vel
        self._pos = min(max(self._pos, -1.2), 0.6)
        if self._pos == -1.2 and self._vel < 0:
            self._vel = 0.0
        terminated = self._pos >= 0.45 and self._vel >= 0.0
        reward = -0.1 * force * force + (100.0 if terminated else 0.0)
        self._steps += 1
        truncated = not terminated and self._steps >= self.max_steps
        return np.array([self._pos, self._vel]), reward, terminated, truncated


_BUILTIN = {
    "MountainCarContinuous-v0": _BuiltinMountainCarContinuous,
}

# bounds for writing weight-file metadata without instantiating gymnasium
ENV_SPECS = {
    "MountainCarContinuous-v0": dict(obs_dim=2, act_dim=1, low=[-1.0], high=[1.0]),
}


class EnvHandle:
    """Uniform reset/step wrapper over gymnasium or the builtin fallback."""

    def __init__(self, env_id: str):
        self.env_id = env_id
        try:
            import gymnasium

            self._env = gymnasium.make(env_id)
            self._gym = True
            self.action_low = np.asarray(self._env.action_space.low, dtype=float)
            self.action_high = np.asarray(self._env.action_space.high, dtype=float)
            self.obs_dim = int(np.prod(self._env.observation_space.shape))
            self.act_dim = int(np.prod(self._env.action_space.shape))
        except ImportError:
            if env_id not in _BUILTIN:
                raise ExportError(
                    f"gymnasium is not installed and {env_id!r} has no builtin fallback "
                    f"(available: {sorted(_BUILTIN)})"
                ) from None
            self._env = _BUILTIN[env_id]()
            self._gym = False
            self.action_low = self._env.action_low.copy()
            self.action_high = self._env.action_high.copy()
            self.obs_dim = self._env.obs_dim
            self.act_dim = self._env.act_dim

    def reset(self, seed):
        if self._gym:
            obs, _ = self._env.reset(seed=seed)
            return np.asarray(obs, dtype=float)
        return self._env.reset(seed)

    def step(self, action):
        if self._gym:
            obs, reward, terminated, truncated, _ = self._env.step(np.asarray(action))
            return np.asarray(obs, dtype=float), float(reward), terminated, truncated
        return self._env.step(action)

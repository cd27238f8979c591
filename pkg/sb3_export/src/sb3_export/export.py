"""Write the vqdistill weight-file and dataset formats from SB3 checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .envs import ENV_SPECS, EnvHandle
from .loader import ExportError, MlpNetwork, load_td3_networks

WEIGHTS_FORMAT = "teacher-weights"
DATASET_FORMAT = "vqdistill-dataset"


@dataclass
class ExportManifest:
    model_path: str
    env_id: str
    n_episodes: int = 100
    out_weights: str = "weights.json"
    out_dataset: str = "dataset.jsonl"
    seed: int = 0

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ExportError("n_episodes must be >= 1")


def _env_bounds(env_id: str):
    try:
        env = EnvHandle(env_id)
        return env.action_low, env.action_high, env.obs_dim, env.act_dim
    except ExportError:
        if env_id in ENV_SPECS:
            spec = ENV_SPECS[env_id]
            return (np.asarray(spec["low"], dtype=float), np.asarray(spec["high"], dtype=float),
                    spec["obs_dim"], spec["act_dim"])
        raise


def _net_block(net: MlpNetwork, scale_output: bool) -> dict:
    return {
        "scale_output": scale_output,
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "weights": [float(v) for v in w.ravel()],
                "bias": [float(v) for v in b],
                "activation": act,
            }
            for w, b, act in zip(net.weights, net.biases, net.activations)
        ],
    }


def scale_action(raw: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Map a tanh-squashed output from [-1, 1] onto the action bounds."""
    return low + 0.5 * (raw + 1.0) * (high - low)


def export_weights(manifest: ExportManifest):
    """Write the actor and the first critic head into the weight-file schema.

    Returns (actor, critic) networks so callers can cross-check outputs.
    """
    actor, critic = load_td3_networks(manifest.model_path)
    low, high, obs_dim, act_dim = _env_bounds(manifest.env_id)
    if actor.input_dim != obs_dim or actor.output_dim != act_dim:
        raise ExportError(
            f"actor is {actor.input_dim}->{actor.output_dim} but {manifest.env_id} "
            f"needs {obs_dim}->{act_dim}"
        )

    doc = {
        "format": WEIGHTS_FORMAT,
        "version": 1,
        "state_dim": actor.input_dim,
        "action_dim": actor.output_dim,
        "action_low": [float(v) for v in low],
        "action_high": [float(v) for v in high],
        "actor": _net_block(actor, scale_output=True),
        "critic": _net_block(critic, scale_output=False),
        "note": "exported from stable-baselines3 TD3 (first critic head only)",
    }
    with open(manifest.out_weights, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return actor, critic


def export_dataset(manifest: ExportManifest):
    """Roll out the checkpoint's actor deterministically and write episodes.

    Episode i resets the environment with seed + i; actions are the squashed
    actor outputs rescaled to the action bounds (no exploration noise).
    Returns the per-episode returns.
    """
    actor, _ = load_td3_networks(manifest.model_path)
    env = EnvHandle(manifest.env_id)
    if actor.input_dim != env.obs_dim or actor.output_dim != env.act_dim:
        raise ExportError(
            f"actor is {actor.input_dim}->{actor.output_dim} but {manifest.env_id} "
            f"needs {env.obs_dim}->{env.act_dim}"
        )

    episodes = []
    returns = []
    for i in range(manifest.n_episodes):
        obs = env.reset(manifest.seed + i)
        states, actions = [], []
        total = 0.0
        while True:
            action = scale_action(actor.forward(obs)[0], env.action_low, env.action_high)
            states.append([float(v) for v in obs])
            actions.append([float(v) for v in action])
            obs, reward, terminated, truncated = env.step(action)
            total += reward
            if terminated or truncated:
                break
        episodes.append({"states": states, "actions": actions})
        returns.append(total)

    header = {
        "format": DATASET_FORMAT,
        "version": 1,
        "env": manifest.env_id,
        "state_dim": env.obs_dim,
        "action_dim": env.act_dim,
        "action_low": [float(v) for v in env.action_low],
        "action_high": [float(v) for v in env.action_high],
        "teacher": "sb3-td3",
        "seed": manifest.seed,
        "n_episodes": manifest.n_episodes,
    }
    with open(manifest.out_dataset, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for ep in episodes:
            fh.write(json.dumps(ep) + "\n")
    return returns

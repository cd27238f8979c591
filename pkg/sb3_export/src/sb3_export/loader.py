"""Read TD3 actor/critic networks straight out of a stable-baselines3 zip.

SB3 checkpoints are zip archives holding a `data` JSON blob and a
`policy.pth` torch state dict. Reading the state dict directly keeps this
tool independent of the stable_baselines3 package: only torch is needed.
Supported policies are plain MLPs (affine stacks with relu or tanh between
layers); anything else raises ExportError naming the offending entry.
"""

from __future__ import annotations

import io
import json
import re
import zipfile
from dataclasses import dataclass

import numpy as np
import torch


class ExportError(RuntimeError):
    pass


@dataclass
class MlpNetwork:
    """Plain affine stack: weights[i] is (out, in); activations per layer."""
    weights: list
    biases: list
    activations: list   # one tag per layer: relu | tanh | identity

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(x, dtype=float))
        for w, b, act in zip(self.weights, self.biases, self.activations):
            y = y @ w.T + b
            if act == "relu":
                y = np.maximum(y, 0.0)
            elif act == "tanh":
                y = np.tanh(y)
        return y


_SUPPORTED_ACTIVATIONS = {
    "ReLU": "relu",
    "Tanh": "tanh",
}


def _read_archive(path):
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as e:
        raise ExportError(f"{path} is not an SB3 zip archive: {e}") from e
    with zf:
        names = zf.namelist()
        policy_name = next((n for n in names if n.endswith("policy.pth")
                            and "target" not in n), None)
        if policy_name is None:
            raise ExportError(f"{path} contains no policy.pth (found {names})")
        state = torch.load(io.BytesIO(zf.read(policy_name)),
                           map_location="cpu", weights_only=True)
        data = json.loads(zf.read("data").decode()) if "data" in names else {}
    return state, data


def _hidden_activation(data: dict) -> str:
    kwargs = data.get("policy_kwargs") or {}
    spec = kwargs.get("activation_fn")
    if spec is None:
        return "relu"   # SB3 default for TD3 MlpPolicy
    if isinstance(spec, dict):
        spec = spec.get(":type:", "")
    name = str(spec).rsplit(".", 1)[-1].strip("'\"<> ")
    if name not in _SUPPORTED_ACTIVATIONS:
        raise ExportError(f"unsupported activation_fn {spec!r} (only ReLU and Tanh)")
    return _SUPPORTED_ACTIVATIONS[name]


def _collect_linear_stack(state: dict, prefix: str) -> tuple[list, list]:
    """Ordered (weight, bias) pairs of `prefix<idx>.weight/bias` entries."""
    pattern = re.compile(re.escape(prefix) + r"(\d+)\.(weight|bias)$")
    found = {}
    for key, tensor in state.items():
        m = pattern.match(key)
        if not m:
            continue
        idx = int(m.group(1))
        arr = tensor.detach().cpu().numpy().astype(float)
        if (m.group(2) == "weight" and arr.ndim != 2) or (m.group(2) == "bias" and arr.ndim != 1):
            raise ExportError(f"unsupported layer type at {key!r}: "
                              f"expected an affine layer, got shape {tuple(arr.shape)}")
        found.setdefault(idx, {})[m.group(2)] = arr
    if not found:
        raise ExportError(f"no linear layers found under {prefix!r}")
    weights, biases = [], []
    for idx in sorted(found):
        entry = found[idx]
        if "weight" not in entry or "bias" not in entry:
            raise ExportError(f"layer {prefix}{idx} is missing weight or bias")
        weights.append(entry["weight"])
        biases.append(entry["bias"])
    return weights, biases


def _reject_unexpected(state: dict, prefix: str):
    pattern = re.compile(re.escape(prefix) + r"\d+\.(weight|bias)$")
    for key, tensor in state.items():
        if key.startswith(prefix) and not pattern.match(key):
            raise ExportError(f"unsupported layer type at {key!r} "
                              f"(shape {tuple(tensor.shape)}); only affine stacks are exportable")


def load_td3_networks(path):
    """Returns (actor: MlpNetwork, critic: MlpNetwork) from an SB3 TD3 zip.

    The actor ends in tanh (TD3 squashes actions); hidden activations come
    from the checkpoint's policy_kwargs. Only the first critic head (qf0) is
    exported.
    """
    state, data = _read_archive(path)
    hidden = _hidden_activation(data)

    for key in state:
        if "features_extractor" in key:
            raise ExportError(f"unsupported layer type at {key!r}: "
                              "non-flatten feature extractors are not exportable")

    _reject_unexpected(state, "actor.mu.")
    w, b = _collect_linear_stack(state, "actor.mu.")
    actor = MlpNetwork(w, b, [hidden] * (len(w) - 1) + ["tanh"])

    _reject_unexpected(state, "critic.qf0.")
    w, b = _collect_linear_stack(state, "critic.qf0.")
    critic = MlpNetwork(w, b, [hidden] * (len(w) - 1) + ["identity"])

    if critic.input_dim != actor.input_dim + actor.output_dim:
        raise ExportError(
            f"critic expects {critic.input_dim} inputs, but state_dim + action_dim is "
            f"{actor.input_dim + actor.output_dim}"
        )
    if critic.output_dim != 1:
        raise ExportError(f"critic head must produce one value, got {critic.output_dim}")
    return actor, critic

"""Dataset and model persistence.

Datasets are line-delimited JSON: one metadata header line, then one line per
episode. Models are a single JSON document. Floats are serialized with
Python's shortest round-trip repr, so load(save(x)) reproduces every value
bit-exactly; nothing time-dependent goes into file bodies.
"""

from __future__ import annotations

import json

import numpy as np

from .envs import Dataset, DatasetMeta, Episode
from .errors import FormatError
from .geometry import Quantizer
from .linear_policy import LinearSubpolicy
from .partitioner import PartitionModel

DATASET_FORMAT = "vqdistill-dataset"
MODEL_FORMAT = "vqdistill-model"


def _floats(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=float).ravel()]


def _matrix(arr) -> list:
    return [[float(v) for v in row] for row in np.asarray(arr, dtype=float)]


def save_dataset(dataset: Dataset, path) -> None:
    meta = dataset.meta
    header = {
        "format": DATASET_FORMAT,
        "version": 1,
        "env": meta.env,
        "state_dim": int(meta.state_dim),
        "action_dim": int(meta.action_dim),
        "action_low": _floats(meta.action_low),
        "action_high": _floats(meta.action_high),
        "teacher": meta.teacher,
        "seed": int(meta.seed),
        "n_episodes": len(dataset.episodes),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for ep in dataset.episodes:
            fh.write(json.dumps({"states": _matrix(ep.states), "actions": _matrix(ep.actions)}) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise FormatError("empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(f"header is not valid JSON: {e}", field="header") from e
    if header.get("format") != DATASET_FORMAT:
        raise FormatError(f"expected {DATASET_FORMAT!r}, got {header.get('format')!r}", field="format")
    for key in ("env", "state_dim", "action_dim", "n_episodes"):
        if key not in header:
            raise FormatError("missing key", field=f"header.{key}")
    n = header["n_episodes"]
    if len(lines) - 1 != n:
        raise FormatError(f"header declares {n} episodes, file has {len(lines) - 1}", field="header.n_episodes")

    sd, ad = header["state_dim"], header["action_dim"]
    episodes = []
    for i, line in enumerate(lines[1:]):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"episode is not valid JSON: {e}", field=f"episodes[{i}]") from e
        states = np.asarray(obj.get("states", []), dtype=float)
        actions = np.asarray(obj.get("actions", []), dtype=float)
        if states.ndim != 2 or states.shape[1] != sd:
            raise FormatError(f"states must be (T, {sd})", field=f"episodes[{i}].states")
        if actions.ndim != 2 or actions.shape[1] != ad or len(actions) != len(states):
            raise FormatError(f"actions must be (T, {ad}) matching states", field=f"episodes[{i}].actions")
        episodes.append(Episode(states, actions))

    meta = DatasetMeta(
        env=header["env"],
        state_dim=sd,
        action_dim=ad,
        action_low=np.asarray(header.get("action_low", [-1.0] * ad), dtype=float),
        action_high=np.asarray(header.get("action_high", [1.0] * ad), dtype=float),
        teacher=header.get("teacher", "unknown"),
        seed=header.get("seed", 0),
    )
    return Dataset(episodes, meta)


def save_model(model: PartitionModel, path, metadata: dict = None) -> None:
    scale = model.quantizer.scale
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "metadata": metadata or {},
        "scale": None if scale is None else _floats(scale),
        "codewords": _matrix(model.quantizer.points),
        "regions": [
            {
                "weights": _matrix(sub.weights),
                "biases": _floats(sub.biases),
                "action_low": _floats(sub.action_low),
                "action_high": _floats(sub.action_high),
                "final_loss": None if loss is None else float(loss),
            }
            for sub, loss in zip(model.subpolicies, model.region_losses)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Returns (PartitionModel, metadata dict)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from e
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"expected {MODEL_FORMAT!r}, got {doc.get('format')!r}", field="format")
    codewords = np.asarray(doc.get("codewords", []), dtype=float)
    if codewords.ndim != 2 or len(codewords) == 0:
        raise FormatError("codewords must be a non-empty 2-D array", field="codewords")
    regions = doc.get("regions", [])
    if len(regions) != len(codewords):
        raise FormatError("one region block per codeword required", field="regions")

    subpolicies, losses = [], []
    for i, reg in enumerate(regions):
        try:
            sub = LinearSubpolicy(
                weights=np.asarray(reg["weights"], dtype=float),
                biases=np.asarray(reg["biases"], dtype=float),
                action_low=np.asarray(reg["action_low"], dtype=float),
                action_high=np.asarray(reg["action_high"], dtype=float),
            )
        except (KeyError, ValueError) as e:
            raise FormatError(str(e), field=f"regions[{i}]") from e
        if sub.state_dim != codewords.shape[1]:
            raise FormatError("weights width must equal the state dimension", field=f"regions[{i}].weights")
        subpolicies.append(sub)
        losses.append(reg.get("final_loss"))

    scale = doc.get("scale")
    quantizer = Quantizer(codewords, scale=None if scale is None else np.asarray(scale, dtype=float))
    return PartitionModel(quantizer, subpolicies, losses), doc.get("metadata", {})


def write_history_csv(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,regions,mean_loss,eval_return\n")
        for rec in history:
            ret = "" if rec.eval_return is None else repr(float(rec.eval_return))
            loss = "" if np.isnan(rec.mean_loss) else repr(rec.mean_loss)
            fh.write(f"{rec.iteration},{rec.region_count},{loss},{ret}\n")


def write_returns_csv(summary, path) -> None:
    with open(path, "w") as fh:
        fh.write("episode,return\n")
        for i, r in enumerate(summary.per_episode_returns):
            fh.write(f"{i},{repr(float(r))}\n")

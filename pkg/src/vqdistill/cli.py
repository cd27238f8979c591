"""Command-line entry point.

Commands: collect, distill, evaluate, diagram, explain. Options resolve in
three layers: built-in defaults, then the --config JSON file, then explicit
flags. VQDISTILL_OUT_DIR and VQDISTILL_THREADS override the output directory
and training thread count. Exit codes: 0 success, 1 runtime error, 2
usage/format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import io as model_io
from .envs import make_env
from .errors import FormatError, InvalidArgumentError, VqDistillError
from .linear_policy import TrainConfig
from .partitioner import DistillConfig, distill
from .teacher import MonteCarloCritic, load_teacher, make_scripted_teacher

CONFIG_DEFAULTS = {
    "environment": None,
    "dataset": None,
    "teacher": "scripted",        # "scripted" or a weight-file path
    "critic": "mc",               # "mc" or a weight-file path
    "gamma": 0.99,
    "horizon": 200,
    "n_rollouts": 1,
    "n_episodes_training": 100,
    "n_episodes_eval": 100,
    "output_dir": ".",
    "seed": 0,
    "mode": "critic",
    "min_codeword_distance": 0.6,
    "value_ratio_threshold": 0.5,
    "max_codewords_region": 2,
    "max_codewords_iteration": 3,
    "n_iterations": 10,
    "max_k_clusters": 8,
    "standardize": False,
    "learning_rate": 1e-2,
    "batch_size": 64,
    "n_epochs": 200,
    "patience": 10,
    "min_delta": 1e-5,
}

_ENV_STATE_VARS = {"simplegoal": ("x", "y"), "mountaincar": ("x", "v")}
_ENV_ACTION_VARS = {"simplegoal": ("dx", "dy"), "mountaincar": ("F",)}


def _load_config(args: argparse.Namespace) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"config is not valid JSON: {e}") from e
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if os.environ.get("VQDISTILL_OUT_DIR"):
        cfg["output_dir"] = os.environ["VQDISTILL_OUT_DIR"]
    return cfg


def _config_digest(cfg: dict) -> str:
    # fingerprint of the run-defining knobs; file locations do not belong
    relevant = {k: v for k, v in cfg.items() if k not in ("output_dir", "dataset")}
    return hashlib.sha256(json.dumps(relevant, sort_keys=True).encode()).hexdigest()[:16]


def _out_path(cfg: dict, name: str) -> str:
    if os.path.isabs(name):
        return name
    os.makedirs(cfg["output_dir"], exist_ok=True)
    return os.path.join(cfg["output_dir"], name)


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("VQDISTILL_THREADS", "1")))
    except ValueError:
        return 1


def _resolve_teacher(cfg: dict, env):
    spec = cfg["teacher"]
    if spec == "scripted":
        return make_scripted_teacher(env), None
    policy, critic = load_teacher(spec)
    return policy, critic


def _resolve_critic(cfg: dict, env, teacher, teacher_file_critic):
    spec = cfg["critic"]
    if spec == "mc":
        return MonteCarloCritic(
            env, teacher, gamma=cfg["gamma"], horizon=cfg["horizon"],
            n_rollouts=cfg["n_rollouts"], seed=cfg["seed"],
        )
    if spec == cfg["teacher"] and teacher_file_critic is not None:
        return teacher_file_critic
    _, critic = load_teacher(spec)
    if critic is None:
        raise FormatError(f"weight file {spec} contains no critic section")
    return critic


def _distill_config(cfg: dict) -> DistillConfig:
    return DistillConfig(
        min_codeword_distance=cfg["min_codeword_distance"],
        value_ratio_threshold=cfg["value_ratio_threshold"],
        max_codewords_region=cfg["max_codewords_region"],
        max_codewords_iteration=cfg["max_codewords_iteration"],
        n_iterations=cfg["n_iterations"],
        max_k_clusters=cfg["max_k_clusters"],
        mode=cfg["mode"],
        seed=cfg["seed"],
        standardize=cfg["standardize"],
        train=TrainConfig(
            learning_rate=cfg["learning_rate"],
            batch_size=cfg["batch_size"],
            n_epochs=cfg["n_epochs"],
            patience=cfg["patience"],
            min_delta=cfg["min_delta"],
            seed=cfg["seed"],
        ),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_collect(args) -> int:
    cfg = _load_config(args)
    if not cfg["environment"]:
        raise InvalidArgumentError("collect requires an environment (--env)")
    env = make_env(cfg["environment"])
    teacher, _ = _resolve_teacher(cfg, env)
    from .envs import rollout

    dataset, summary = rollout(env, teacher, cfg["n_episodes_training"], cfg["seed"],
                               teacher_id=teacher.name)
    out = _out_path(cfg, args.out)
    model_io.save_dataset(dataset, out)
    print(f"wrote {len(dataset.episodes)} episodes ({dataset.n_pairs} pairs) to {out}")
    print(f"teacher return: {summary.mean_return:.3f} +/- {summary.std_return:.3f} "
          f"over {summary.n_episodes} episodes")
    return 0


def cmd_distill(args) -> int:
    cfg = _load_config(args)
    dataset_path = args.dataset or cfg["dataset"]
    if not dataset_path:
        raise InvalidArgumentError("distill requires a dataset (--dataset)")
    dataset = model_io.load_dataset(dataset_path)

    dcfg = _distill_config(cfg)
    critic = None
    if dcfg.mode == "critic":
        env_name = cfg["environment"] or dataset.meta.env
        env = make_env(env_name)
        teacher, file_critic = _resolve_teacher(cfg, env)
        critic = _resolve_critic(cfg, env, teacher, file_critic)

    result = distill(dataset, critic, dcfg, n_threads=_n_threads())

    metadata = {
        "env": dataset.meta.env,
        "state_dim": dataset.meta.state_dim,
        "action_dim": dataset.meta.action_dim,
        "config_digest": _config_digest(cfg),
        "seed": cfg["seed"],
        "mode": dcfg.mode,
    }
    out = _out_path(cfg, args.out)
    model_io.save_model(result.model, out, metadata)
    print(f"wrote model with {result.model.n_regions} regions to {out}")
    if args.history:
        hist = _out_path(cfg, args.history)
        model_io.write_history_csv(result.history, hist)
        print(f"wrote history ({len(result.history)} iterations) to {hist}")
    if result.converged_at is not None:
        print(f"region count converged at iteration {result.converged_at}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    model, metadata = model_io.load_model(args.model)
    env_name = cfg["environment"] or metadata.get("env")
    if not env_name:
        raise InvalidArgumentError("evaluate requires an environment (--env)")
    env = make_env(env_name)
    from .envs import evaluate

    summary = evaluate(env, model.predict, cfg["n_episodes_eval"], cfg["seed"])
    print(f"mean {summary.mean_return:.3f} +/- {summary.std_return:.3f} "
          f"over {summary.n_episodes} episodes")
    if args.csv:
        out = _out_path(cfg, args.csv)
        model_io.write_returns_csv(summary, out)
        print(f"wrote per-episode returns to {out}")
    return 0


def _slice_grid(model, axes, bounds, resolution, fixed):
    ax, ay = axes
    xs = bounds[0] + (np.arange(resolution) + 0.5) * (bounds[1] - bounds[0]) / resolution
    ys = bounds[2] + (np.arange(resolution) + 0.5) * (bounds[3] - bounds[2]) / resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.tile(np.asarray(fixed, dtype=float), (resolution * resolution, 1))
    pts[:, ax] = gx.ravel()
    pts[:, ay] = gy.ravel()
    regions = model.quantizer.nearest_batch(pts)
    actions = model.predict_batch(pts)
    return pts, regions.reshape(resolution, resolution), actions, xs, ys


def _region_color(i: int) -> str:
    hue = (i * 137.508) % 360.0
    return f"hsl({hue:.1f}, 62%, 78%)"


def _render_svg(model, axes, bounds, resolution, regions, xs, ys) -> str:
    size, margin = 560, 20
    span_x = bounds[1] - bounds[0]
    span_y = bounds[3] - bounds[2]
    inner = size - 2 * margin

    def px(x):
        return margin + (x - bounds[0]) / span_x * inner

    def py(y):
        return size - margin - (y - bounds[2]) / span_y * inner

    cell_w = inner / resolution
    cell_h = inner / resolution
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    half_x = 0.5 * span_x / resolution
    half_y = 0.5 * span_y / resolution
    for i in range(resolution):
        for j in range(resolution):
            parts.append(
                f'<rect x="{px(xs[i] - half_x):.2f}" y="{py(ys[j] + half_y):.2f}" '
                f'width="{cell_w + 0.5:.2f}" height="{cell_h + 0.5:.2f}" '
                f'fill="{_region_color(int(regions[i, j]))}"/>'
            )
    # boundary tracing: an edge segment wherever adjacent samples disagree
    for i in range(resolution):
        for j in range(resolution):
            if i + 1 < resolution and regions[i + 1, j] != regions[i, j]:
                x_edge = xs[i] + half_x
                parts.append(
                    f'<line x1="{px(x_edge):.2f}" y1="{py(ys[j] - half_y):.2f}" '
                    f'x2="{px(x_edge):.2f}" y2="{py(ys[j] + half_y):.2f}" '
                    f'stroke="#333" stroke-width="1"/>'
                )
            if j + 1 < resolution and regions[i, j + 1] != regions[i, j]:
                y_edge = ys[j] + half_y
                parts.append(
                    f'<line x1="{px(xs[i] - half_x):.2f}" y1="{py(y_edge):.2f}" '
                    f'x2="{px(xs[i] + half_x):.2f}" y2="{py(y_edge):.2f}" '
                    f'stroke="#333" stroke-width="1"/>'
                )
    for cw in model.quantizer.points:
        cx, cy = cw[axes[0]], cw[axes[1]]
        if bounds[0] <= cx <= bounds[1] and bounds[2] <= cy <= bounds[3]:
            parts.append(
                f'<circle cx="{px(cx):.2f}" cy="{py(cy):.2f}" r="4" '
                f'fill="black" stroke="white" stroke-width="1"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_diagram(args) -> int:
    cfg = _load_config(args)
    model, metadata = model_io.load_model(args.model)
    d = model.quantizer.dimension
    axes = tuple(args.axes)
    if len(axes) != 2 or not all(0 <= a < d for a in axes) or axes[0] == axes[1]:
        raise InvalidArgumentError(f"--axes must name two distinct dimensions below {d}")

    if args.bounds:
        bounds = tuple(args.bounds)
    else:
        env_name = cfg["environment"] or metadata.get("env")
        try:
            env = make_env(env_name) if env_name else None
        except InvalidArgumentError:
            env = None
        if env is None:
            raise InvalidArgumentError("--bounds required when the environment is unknown")
        bounds = (
            env.observation_low[axes[0]], env.observation_high[axes[0]],
            env.observation_low[axes[1]], env.observation_high[axes[1]],
        )

    if args.fix is not None:
        if len(args.fix) != d:
            raise InvalidArgumentError(f"--fix needs {d} values (axis entries are overwritten)")
        fixed = np.asarray(args.fix, dtype=float)
    elif args.dataset:
        fixed = model_io.load_dataset(args.dataset).all_states().mean(axis=0)
    else:
        fixed = np.zeros(d)

    r = args.resolution
    pts, regions, actions, xs, ys = _slice_grid(model, axes, bounds, r, fixed)

    out_csv = _out_path(cfg, args.out_csv)
    action_dim = actions.shape[1]
    with open(out_csv, "w") as fh:
        fh.write("x,y,region_index," + ",".join(f"action_{k}" for k in range(action_dim)) + "\n")
        flat_regions = regions.ravel()
        for row, reg, act in zip(pts, flat_regions, actions):
            acts = ",".join(repr(float(a)) for a in act)
            fh.write(f"{repr(float(row[axes[0]]))},{repr(float(row[axes[1]]))},{int(reg)},{acts}\n")

    out_svg = _out_path(cfg, args.out_svg)
    with open(out_svg, "w") as fh:
        fh.write(_render_svg(model, axes, bounds, r, regions, xs, ys))
    print(f"wrote {r * r}-point grid to {out_csv} and diagram to {out_svg}")
    return 0


def _term(coef: float, name: str, first: bool) -> str:
    magnitude = f"{abs(coef):.3f}" + (f"*{name}" if name else "")
    if first:
        return f"-{magnitude}" if coef < 0 else magnitude
    return f"- {magnitude}" if coef < 0 else f"+ {magnitude}"


def render_explanation(model, metadata) -> str:
    env_name = metadata.get("env", "")
    d = model.quantizer.dimension
    k = model.subpolicies[0].action_dim
    svars = _ENV_STATE_VARS.get(env_name, tuple(f"s{i}" for i in range(d)))
    avars = _ENV_ACTION_VARS.get(env_name, tuple(f"a{i}" for i in range(k)))

    lines = []
    for i, (cw, sub) in enumerate(zip(model.quantizer.points, model.subpolicies)):
        coords = ", ".join(f"{v:.3f}" for v in cw)
        lines.append(f"region {i}: codeword [{coords}]")
        for row in range(k):
            terms = []
            for j in range(d):
                w = sub.weights[row, j]
                if abs(round(w, 3)) > 0:
                    terms.append(_term(w, svars[j], first=not terms))
            b = sub.biases[row]
            if abs(round(b, 3)) > 0 or not terms:
                terms.append(_term(b, "", first=not terms))
            lines.append(f"  {avars[row]} = " + " ".join(terms))
    return "\n".join(lines) + "\n"


def cmd_explain(args) -> int:
    model, metadata = model_io.load_model(args.model)
    sys.stdout.write(render_explanation(model, metadata))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--env", dest="environment", help="environment name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="output_dir", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqdistill",
                                 description="Distill a control policy into Voronoi-partitioned linear subpolicies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="roll out a teacher and write a dataset file")
    _add_common(p)
    p.add_argument("--teacher", default=None, help="'scripted' or a weight-file path")
    p.add_argument("--episodes", dest="n_episodes_training", type=int, default=None)
    p.add_argument("--out", default="dataset.jsonl")
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("distill", help="distill a dataset into a partition model")
    _add_common(p)
    p.add_argument("--dataset", default=None, help="dataset file from `collect`")
    p.add_argument("--teacher", default=None, help="'scripted' or a weight-file path (for the MC critic)")
    p.add_argument("--critic", default=None, help="'mc' or a weight-file path")
    p.add_argument("--mode", choices=["critic", "random"], default=None)
    p.add_argument("--min-codeword-distance", dest="min_codeword_distance", type=float, default=None)
    p.add_argument("--value-ratio", dest="value_ratio_threshold", type=float, default=None)
    p.add_argument("--max-codewords-region", dest="max_codewords_region", type=int, default=None)
    p.add_argument("--max-codewords-iteration", dest="max_codewords_iteration", type=int, default=None)
    p.add_argument("--iterations", dest="n_iterations", type=int, default=None)
    p.add_argument("--max-k-clusters", dest="max_k_clusters", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", default="model.json")
    p.add_argument("--history", default="history.csv")
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("evaluate", help="evaluate a model file in an environment")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--episodes", dest="n_episodes_eval", type=int, default=None)
    p.add_argument("--csv", default=None, help="write per-episode returns here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("diagram", help="export a 2-D Voronoi slice (SVG + grid CSV)")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--axes", type=int, nargs=2, default=[0, 1])
    p.add_argument("--bounds", type=float, nargs=4, default=None,
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--resolution", type=int, default=60)
    p.add_argument("--fix", type=float, nargs="+", default=None,
                   help="values for the non-axis state components")
    p.add_argument("--dataset", default=None, help="use this dataset's state means for --fix")
    p.add_argument("--out-svg", default="diagram.svg")
    p.add_argument("--out-csv", default="diagram_grid.csv")
    p.set_defaults(fn=cmd_diagram)

    p = sub.add_parser("explain", help="print each region's codeword and linear function")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(fn=cmd_explain)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, InvalidArgumentError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except VqDistillError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Teacher policies and critics.

Teachers come in two flavors: scripted controllers for the native
environments, and feed-forward networks imported from a weight file. Critics
likewise: an imported network head, or a Monte-Carlo estimator that injects a
state into a private environment and follows the teacher.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .envs import Environment
from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidArgumentError,
    UnsupportedOperationError,
)

WEIGHTS_FORMAT = "teacher-weights"
ACTIVATIONS = ("relu", "tanh", "identity")


# ---------------------------------------------------------------------------
# feed-forward network inference
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    weights: np.ndarray   # (out, in)
    bias: np.ndarray      # (out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.activation not in ACTIVATIONS:
            raise FormatError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkWeights:
    layers: list
    input_dim: int
    output_dim: int
    scale_output: bool = False          # map a tanh-squashed output onto [low, high]
    output_low: np.ndarray = None
    output_high: np.ndarray = None


def _activate(z: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "identity":
        return z
    raise FormatError(f"unknown activation {tag!r}")


def mlp_forward(net: NetworkWeights, x) -> np.ndarray:
    """Evaluate the network on a single input (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if x.shape[-1] != net.input_dim:
        raise DimensionMismatchError(f"input dimension {x.shape[-1]}, network expects {net.input_dim}")
    y = np.atleast_2d(x)
    for layer in net.layers:
        y = _activate(y @ layer.weights.T + layer.bias, layer.activation)
    if net.scale_output:
        low = np.asarray(net.output_low, dtype=float)
        high = np.asarray(net.output_high, dtype=float)
        y = low + 0.5 * (y + 1.0) * (high - low)
    return y[0] if single else y


# ---------------------------------------------------------------------------
# weight file schema
# ---------------------------------------------------------------------------

def _parse_layer(obj, path: str) -> Layer:
    for key in ("rows", "cols", "weights", "bias", "activation"):
        if key not in obj:
            raise FormatError("missing key", field=f"{path}.{key}")
    rows, cols = obj["rows"], obj["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        raise FormatError("rows/cols must be positive integers", field=path)
    w = np.asarray(obj["weights"], dtype=float)
    if w.size != rows * cols:
        raise FormatError(f"expected {rows * cols} weights, got {w.size}", field=f"{path}.weights")
    b = np.asarray(obj["bias"], dtype=float)
    if b.size != rows:
        raise FormatError(f"expected {rows} bias entries, got {b.size}", field=f"{path}.bias")
    if obj["activation"] not in ACTIVATIONS:
        raise FormatError(
            f"activation must be one of {ACTIVATIONS}, got {obj['activation']!r}",
            field=f"{path}.activation",
        )
    return Layer(w.reshape(rows, cols), b, obj["activation"])


def _parse_network(obj, input_dim, output_dim, low, high, path: str) -> NetworkWeights:
    layers_obj = obj.get("layers")
    if not isinstance(layers_obj, list) or not layers_obj:
        raise FormatError("must contain a non-empty layer list", field=f"{path}.layers")
    layers = [_parse_layer(l, f"{path}.layers[{i}]") for i, l in enumerate(layers_obj)]
    expect = input_dim
    for i, layer in enumerate(layers):
        if layer.weights.shape[1] != expect:
            raise FormatError(
                f"expects {layer.weights.shape[1]} inputs but the chain provides {expect}",
                field=f"{path}.layers[{i}]",
            )
        expect = layer.weights.shape[0]
    if expect != output_dim:
        raise FormatError(f"final layer produces {expect} outputs, expected {output_dim}", field=path)
    if obj.get("scale_output") and low is None:
        raise FormatError("scale_output requires output bounds", field=f"{path}.scale_output")
    return NetworkWeights(
        layers=layers,
        input_dim=input_dim,
        output_dim=output_dim,
        scale_output=bool(obj.get("scale_output", False)),
        output_low=low,
        output_high=high,
    )


def save_weights(path, state_dim, action_dim, action_low, action_high, actor: NetworkWeights, critic: NetworkWeights = None, note: str = ""):
    """Write the weight-file schema. Floats keep full round-trip precision."""
    def net_obj(net):
        return {
            "scale_output": bool(net.scale_output),
            "layers": [
                {
                    "rows": int(l.weights.shape[0]),
                    "cols": int(l.weights.shape[1]),
                    "weights": [float(v) for v in l.weights.ravel()],
                    "bias": [float(v) for v in l.bias],
                    "activation": l.activation,
                }
                for l in net.layers
            ],
        }

    doc = {
        "format": WEIGHTS_FORMAT,
        "version": 1,
        "state_dim": int(state_dim),
        "action_dim": int(action_dim),
        "action_low": [float(v) for v in np.asarray(action_low).ravel()],
        "action_high": [float(v) for v in np.asarray(action_high).ravel()],
        "actor": net_obj(actor),
    }
    if critic is not None:
        doc["critic"] = net_obj(critic)
    if note:
        doc["note"] = note
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


# ---------------------------------------------------------------------------
# teacher policy and critics
# ---------------------------------------------------------------------------

@dataclass
class TeacherPolicy:
    """A state -> action callable with declared dimensions and bounds."""
    fn: object
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    name: str = "teacher"

    def __call__(self, state):
        state = np.asarray(state, dtype=float)
        if state.shape[-1] != self.state_dim:
            raise DimensionMismatchError(f"state dimension {state.shape[-1]}, teacher expects {self.state_dim}")
        action = np.asarray(self.fn(state), dtype=float)
        return np.clip(action, self.action_low, self.action_high)


class Critic:
    """Maps (state, action) to a scalar value. Subclasses implement `values`."""

    def values(self, states, actions) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, state, action) -> float:
        return float(self.values(np.atleast_2d(state), np.atleast_2d(action))[0])


def critic_values(critic, states, actions) -> np.ndarray:
    """Batched critic evaluation for Critic instances or bare (s, a) callables."""
    if hasattr(critic, "values"):
        return np.asarray(critic.values(states, actions), dtype=float)
    return np.array([float(critic(s, a)) for s, a in zip(states, actions)])


class NetworkCritic(Critic):
    """Imported critic head; input is the concatenation state ++ action."""

    def __init__(self, net: NetworkWeights):
        self.net = net

    def values(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        return mlp_forward(self.net, np.concatenate([states, actions], axis=1)).ravel()


class MonteCarloCritic(Critic):
    """Q estimate by injecting the state and following the teacher.

    Applies the queried action once, then the teacher for up to `horizon`
    steps, accumulating discounted rewards; the environment's own step limit
    still truncates. Averages `n_rollouts` rollouts (one suffices for the
    deterministic native environments). Rollouts run vectorized and never
    mutate the wrapped environment instance.
    """

    def __init__(self, env: Environment, teacher, gamma: float = 0.99,
                 horizon: int = 200, n_rollouts: int = 1, seed: int = 0):
        if not hasattr(env, "step_batch") or not hasattr(env, "set_state"):
            raise UnsupportedOperationError("environment does not support state injection")
        if not 0.0 <= gamma < 1.0 + 1e-12:
            raise InvalidArgumentError("gamma must lie in [0, 1]")
        self.env = env
        self.teacher = teacher
        self.gamma = float(gamma)
        self.horizon = int(horizon)
        self.n_rollouts = max(1, int(n_rollouts))
        self.seed = seed

    def values(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        total = np.zeros(len(states))
        for _ in range(self.n_rollouts):
            total += self._rollout_values(states, actions)
        return total / self.n_rollouts

    def _rollout_values(self, states, actions) -> np.ndarray:
        env = self.env
        cur, rewards, terminated = env.step_batch(states, actions)
        q = rewards.astype(float).copy()
        alive = ~terminated
        teacher_steps = min(self.horizon, env.max_steps - 1)
        for t in range(1, teacher_steps + 1):
            if not alive.any():
                break
            acts = np.atleast_2d(np.asarray(self.teacher(cur), dtype=float))
            if acts.shape[0] != len(cur):
                acts = acts.reshape(len(cur), -1)
            nxt, rewards, terminated = env.step_batch(cur, acts)
            q += np.where(alive, self.gamma ** t * rewards, 0.0)
            cur = np.where(alive[:, None], nxt, cur)
            alive &= ~terminated
        return q


def mc_critic(env: Environment, teacher, s, a, gamma: float, n_rollouts: int,
              horizon: int, seed: int = 0) -> float:
    """Scalar Monte-Carlo Q estimate via explicit state injection.

    Walks the environment step by step (set_state + step); the vectorized
    MonteCarloCritic must agree with this reference path.
    """
    if not hasattr(env, "set_state"):
        raise UnsupportedOperationError("environment does not support state injection")
    total = 0.0
    for _ in range(max(1, n_rollouts)):
        env.set_state(np.asarray(s, dtype=float))
        _, reward, terminated, truncated = env.step(a)
        q = float(reward)
        t = 0
        state = env.state
        while not terminated and not truncated and t < horizon:
            t += 1
            state, reward, terminated, truncated = env.step(teacher(state))
            q += (gamma ** t) * float(reward)
        total += q
    return total / max(1, n_rollouts)


# ---------------------------------------------------------------------------
# scripted teachers
# ---------------------------------------------------------------------------

_SG_GOAL = np.array([0.05, 0.05])
_SG_BOX_LO = 0.35   # pitfall inflated by a 0.05 margin
_SG_BOX_HI = 0.65
# detour waypoints outside the inflated box corners; the generous clearance
# keeps distilled approximations of the detour out of the pitfall
_SG_WAYPOINT_LOW = np.array([0.74, 0.26])    # around the lower-right side
_SG_WAYPOINT_HIGH = np.array([0.26, 0.74])   # around the upper-left side


def _segments_hit_box(p0: np.ndarray, p1: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Axis-aligned slab test: does each row segment p0->p1 cross [lo, hi]^2?"""
    d = p1 - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - p0) / d
        t2 = (hi - p0) / d
    tlo = np.minimum(t1, t2)
    thi = np.maximum(t1, t2)
    parallel = d == 0.0
    inside = (p0 >= lo) & (p0 <= hi)
    tlo = np.where(parallel, np.where(inside, -np.inf, np.inf), tlo)
    thi = np.where(parallel, np.where(inside, np.inf, -np.inf), thi)
    tmin = tlo.max(axis=1)
    tmax = thi.min(axis=1)
    return (tmax >= np.maximum(tmin, 0.0)) & (tmin <= 1.0)


def scripted_simplegoal(state) -> np.ndarray:
    """Head straight for the goal corner; sidestep the pitfall when it blocks.

    The action is the unit direction toward the goal center, except when the
    straight segment to the goal crosses the inflated pitfall box: then the
    agent steers for a waypoint just past the box corner on its own side of
    the diagonal.
    """
    s = np.asarray(state, dtype=float)
    single = s.ndim == 1
    p = np.atleast_2d(s)

    goal = np.broadcast_to(_SG_GOAL, p.shape)
    blocked = _segments_hit_box(p, goal, _SG_BOX_LO, _SG_BOX_HI)
    lower_side = p[:, 0] - p[:, 1] >= 0.0
    waypoint = np.where(lower_side[:, None], _SG_WAYPOINT_LOW, _SG_WAYPOINT_HIGH)
    target = np.where(blocked[:, None], waypoint, goal)

    direction = target - p
    norm = np.linalg.norm(direction, axis=1, keepdims=True)
    action = np.divide(direction, norm, out=np.zeros_like(direction), where=norm > 0)
    return action[0] if single else action


# potential energy of the car (slope force is -0.0025*cos(3x), so U = 0.0025/3 * sin(3x))
_MC_U_SCALE = 0.0025 / 3.0
_MC_GOAL_X = 0.45
_MC_POWER = 0.0015
_MC_ENERGY_MARGIN = 2e-4


def _mc_energy_suffices(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # full throttle from here reaches the goal when kinetic + potential energy
    # plus the work the motor can add over the remaining distance clears the
    # goal's potential (with a margin for arrival speed)
    energy = 0.5 * v * v + _MC_U_SCALE * np.sin(3.0 * x)
    gain = _MC_POWER * (_MC_GOAL_X - x)
    return energy + gain >= _MC_U_SCALE * np.sin(3.0 * _MC_GOAL_X) + _MC_ENERGY_MARGIN


def scripted_mountaincar(state) -> np.ndarray:
    """Energy-pumping bang-bang controller with a full-throttle finish.

    Pushes with the velocity sign to build momentum (at standstill: right,
    unless already far up the left slope); once the stored energy plus the
    work available over the remaining distance suffices to clear the hill,
    it holds full throttle toward the goal.
    """
    s = np.asarray(state, dtype=float)
    single = s.ndim == 1
    st = np.atleast_2d(s)
    x, v = st[:, 0], st[:, 1]
    pump = np.where(v > 0, 1.0, np.where(v < 0, -1.0, np.where(x >= -0.9, 1.0, -1.0)))
    action = np.where(_mc_energy_suffices(x, v), 1.0, pump)
    return action[:, None][0] if single else action[:, None]


def make_scripted_teacher(env: Environment) -> TeacherPolicy:
    table = {
        "simplegoal": scripted_simplegoal,
        "mountaincar": scripted_mountaincar,
    }
    if env.name not in table:
        raise InvalidArgumentError(f"no scripted teacher for environment {env.name!r}")
    return TeacherPolicy(
        fn=table[env.name],
        state_dim=env.state_dim,
        action_dim=env.action_dim,
        action_low=env.action_low.copy(),
        action_high=env.action_high.copy(),
        name=f"scripted-{env.name}",
    )


def load_teacher(path):
    """Load (TeacherPolicy, Critic-or-None) from a weight file.

    Raises FormatError with the offending field path on any schema violation.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from e

    if doc.get("format") != WEIGHTS_FORMAT:
        raise FormatError(f"expected {WEIGHTS_FORMAT!r}, got {doc.get('format')!r}", field="format")
    for key in ("state_dim", "action_dim", "action_low", "action_high", "actor"):
        if key not in doc:
            raise FormatError("missing key", field=key)
    state_dim = doc["state_dim"]
    action_dim = doc["action_dim"]
    if not (isinstance(state_dim, int) and state_dim > 0):
        raise FormatError("must be a positive integer", field="state_dim")
    if not (isinstance(action_dim, int) and action_dim > 0):
        raise FormatError("must be a positive integer", field="action_dim")
    low = np.asarray(doc["action_low"], dtype=float)
    high = np.asarray(doc["action_high"], dtype=float)
    if low.shape != (action_dim,):
        raise FormatError(f"expected {action_dim} entries", field="action_low")
    if high.shape != (action_dim,):
        raise FormatError(f"expected {action_dim} entries", field="action_high")
    if not np.all(low < high):
        raise FormatError("action_low must be < action_high elementwise", field="action_low")

    actor = _parse_network(doc["actor"], state_dim, action_dim, low, high, "actor")
    policy = TeacherPolicy(
        fn=lambda s: mlp_forward(actor, s),
        state_dim=state_dim,
        action_dim=action_dim,
        action_low=low,
        action_high=high,
        name="imported-network",
    )

    critic = None
    if "critic" in doc:
        critic_net = _parse_network(doc["critic"], state_dim + action_dim, 1, None, None, "critic")
        critic = NetworkCritic(critic_net)
    return policy, critic

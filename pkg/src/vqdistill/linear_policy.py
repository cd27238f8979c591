"""Linear subpolicies and their supervised training loop.

A subpolicy maps a state to an action through a single affine layer,
``a = W s + b``, clipped elementwise to the action bounds at prediction time.
Training minimizes mean squared error on the raw (pre-clip) output with Adam
over shuffled minibatches, stopping early when the epoch loss stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 64
    n_epochs: int = 200
    patience: int = 10          # epochs without sufficient improvement
    min_delta: float = 1e-5     # loss units
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.n_epochs < 1:
            raise InvalidArgumentError("learning_rate, batch_size, n_epochs must be positive")
        if self.patience < 1 or self.min_delta < 0:
            raise InvalidArgumentError("patience must be >= 1 and min_delta >= 0")


@dataclass
class TrainingReport:
    final_mean_loss: float
    epochs_run: int
    stopped_early: bool


@dataclass
class LinearSubpolicy:
    weights: np.ndarray     # (action_dim, state_dim)
    biases: np.ndarray      # (action_dim,)
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        self.action_low = np.asarray(self.action_low, dtype=float)
        self.action_high = np.asarray(self.action_high, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.biases.shape[0]:
            raise InvalidArgumentError("weights must be (action_dim, state_dim) matching biases")
        if not np.all(self.action_low < self.action_high):
            raise InvalidArgumentError("action_low must be < action_high elementwise")

    @property
    def state_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def action_dim(self) -> int:
        return self.weights.shape[0]

    def linear_output(self, s) -> np.ndarray:
        """Raw affine output W s + b, no clipping. Accepts (d,) or (n, d)."""
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.state_dim:
            raise DimensionMismatchError(
                f"state dimension {s.shape[-1]}, subpolicy expects {self.state_dim}"
            )
        return s @ self.weights.T + self.biases

    def predict(self, s) -> np.ndarray:
        """Action for state `s`, clipped elementwise to the action bounds."""
        return np.clip(self.linear_output(s), self.action_low, self.action_high)


def init_subpolicy(state_dim: int, action_low, action_high, rng: np.random.Generator) -> LinearSubpolicy:
    """Fresh subpolicy with small random weights and zero bias.

    Small weights keep early actions near zero instead of saturated at the
    clip bounds.
    """
    action_low = np.asarray(action_low, dtype=float)
    action_dim = action_low.shape[0]
    w = rng.uniform(-0.01, 0.01, size=(action_dim, state_dim))
    return LinearSubpolicy(w, np.zeros(action_dim), action_low, np.asarray(action_high, dtype=float))


def mse_loss(policy: LinearSubpolicy, states: np.ndarray, actions: np.ndarray) -> float:
    err = policy.linear_output(states) - actions
    return float(np.mean(err * err))


def mse_gradients(weights, biases, states, actions):
    """Analytic gradient of mean((W s + b - a)^2) w.r.t. W and b."""
    pred = states @ weights.T + biases
    err = pred - actions
    scale = 2.0 / err.size
    grad_w = scale * err.T @ states
    grad_b = scale * err.sum(axis=0)
    return grad_w, grad_b


def train(
    policy: LinearSubpolicy,
    states,
    actions,
    cfg: TrainConfig,
) -> tuple[LinearSubpolicy, TrainingReport]:
    """Fit `policy` to (states, actions) by minibatch Adam on the MSE loss.

    Stops early when the epoch loss (full-dataset MSE on the raw linear
    output) has not improved by more than ``min_delta`` for ``patience``
    consecutive epochs. Returns a new subpolicy; the input is not mutated.
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if actions.ndim == 1:
        actions = actions[:, None]
    if len(states) == 0:
        raise InvalidArgumentError("training set is empty")
    if len(states) != len(actions):
        raise InvalidArgumentError(f"{len(states)} states vs {len(actions)} actions")
    if states.shape[1] != policy.state_dim or actions.shape[1] != policy.action_dim:
        raise DimensionMismatchError("training data dimensions do not match the subpolicy")

    w = policy.weights.copy()
    b = policy.biases.copy()
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)

    rng = np.random.default_rng(cfg.seed)
    n = len(states)
    t = 0
    best = np.inf
    stall = 0
    stopped_early = False
    epochs_run = 0

    for _ in range(cfg.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            g_w, g_b = mse_gradients(w, b, states[batch], actions[batch])
            t += 1
            m_w = ADAM_BETA1 * m_w + (1 - ADAM_BETA1) * g_w
            v_w = ADAM_BETA2 * v_w + (1 - ADAM_BETA2) * g_w * g_w
            m_b = ADAM_BETA1 * m_b + (1 - ADAM_BETA1) * g_b
            v_b = ADAM_BETA2 * v_b + (1 - ADAM_BETA2) * g_b * g_b
            mhat_w = m_w / (1 - ADAM_BETA1 ** t)
            vhat_w = v_w / (1 - ADAM_BETA2 ** t)
            mhat_b = m_b / (1 - ADAM_BETA1 ** t)
            vhat_b = v_b / (1 - ADAM_BETA2 ** t)
            w -= cfg.learning_rate * mhat_w / (np.sqrt(vhat_w) + ADAM_EPS)
            b -= cfg.learning_rate * mhat_b / (np.sqrt(vhat_b) + ADAM_EPS)

        epochs_run += 1
        epoch_loss = float(np.mean((states @ w.T + b - actions) ** 2))
        if epoch_loss < best - cfg.min_delta:
            best = epoch_loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                stopped_early = True
                break

    fitted = replace(policy, weights=w, biases=b)
    report = TrainingReport(
        final_mean_loss=mse_loss(fitted, states, actions),
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )
    return fitted, report

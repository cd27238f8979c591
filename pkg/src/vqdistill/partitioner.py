"""The outer distillation loop: alternate subpolicy training with region splits.

Each iteration trains every subpolicy on the states routed to its region,
then (except on the last iteration) visits regions from worst to best
training loss and splits them: states far from the region's codeword are
candidates, the critic keeps the lowest-valued fraction, and clustering
proposes new codewords. Caps bound how much a region and an iteration may
grow, and a resolution guard rejects codewords too close to existing ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import Dataset, evaluate
from .errors import InvalidArgumentError
from .clustering import find_clusters
from .geometry import Quantizer
from .linear_policy import LinearSubpolicy, TrainConfig, init_subpolicy, train
from .teacher import critic_values


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# stream tags so derived generators never collide
_TAG_INIT = 1
_TAG_CLUSTER = 2
_TAG_RANDOM_SELECT = 3


@dataclass
class DistillConfig:
    """All knobs of the distillation loop.

    `min_codeword_distance` is the spatial resolution: only states farther
    than this from their codeword can seed new regions, and no two codewords
    may end up closer than this. `value_ratio_threshold` is the fraction of
    candidates (lowest critic value first) forwarded to clustering.
    """

    min_codeword_distance: float
    value_ratio_threshold: float
    max_codewords_region: int
    max_codewords_iteration: int
    n_iterations: int
    max_k_clusters: int = 8
    mode: str = "critic"              # "critic" or "random"
    seed: int = 0
    standardize: bool = False         # per-dimension distance standardization
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.min_codeword_distance <= 0:
            raise InvalidArgumentError("min_codeword_distance must be positive")
        if not 0 < self.value_ratio_threshold <= 1:
            raise InvalidArgumentError("value_ratio_threshold must lie in (0, 1]")
        if min(self.max_codewords_region, self.max_codewords_iteration, self.n_iterations) < 1:
            raise InvalidArgumentError("caps and n_iterations must be >= 1")
        if self.max_k_clusters < 2:
            raise InvalidArgumentError("max_k_clusters must be >= 2")
        if self.mode not in ("critic", "random"):
            raise InvalidArgumentError(f"mode must be 'critic' or 'random', got {self.mode!r}")


@dataclass
class PartitionModel:
    """The distilled artifact: codewords plus one linear subpolicy per region."""

    quantizer: Quantizer
    subpolicies: list
    region_losses: list

    def __post_init__(self):
        if len(self.subpolicies) != len(self.quantizer):
            raise InvalidArgumentError("one subpolicy per codeword required")

    @property
    def n_regions(self) -> int:
        return len(self.quantizer)

    def predict(self, s) -> np.ndarray:
        return self.subpolicies[self.quantizer.nearest(s)].predict(s)

    def predict_batch(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        out = np.empty((len(states), self.subpolicies[0].action_dim))
        regions = self.quantizer.nearest_batch(states)
        for r in np.unique(regions):
            mask = regions == r
            out[mask] = self.subpolicies[r].predict(states[mask])
        return out


def model_predict(model: PartitionModel, s) -> np.ndarray:
    """Route `s` to its region's subpolicy and return the clipped action."""
    return model.predict(s)


@dataclass
class IterationRecord:
    iteration: int
    region_count: int            # regions after this iteration's splits
    region_losses: list          # per-region final training loss (None = never trained)
    eval_return: float = None    # filled when an evaluation hook is supplied

    @property
    def mean_loss(self) -> float:
        known = [l for l in self.region_losses if l is not None]
        return float(np.mean(known)) if known else float("nan")


@dataclass
class DistillResult:
    model: PartitionModel
    history: list
    converged_at: int = None     # first iteration opening 3 equal consecutive counts


def candidate_states(states, codeword, min_dist: float, scale=None) -> np.ndarray:
    """States strictly farther than `min_dist` from the region's own codeword."""
    states = np.asarray(states, dtype=float)
    codeword = np.asarray(codeword, dtype=float)
    diff = states - codeword
    if scale is not None:
        diff = diff * np.asarray(scale, dtype=float)
    dist = np.linalg.norm(diff, axis=1)
    return states[dist > min_dist]


def select_low_value(candidates, subpolicy: LinearSubpolicy, critic, ratio: float) -> np.ndarray:
    """The lowest-valued fraction of candidates under the critic.

    Evaluates q = Q(s, subpolicy(s)) per candidate, sorts ascending, and keeps
    the first floor(ratio * n) states (at least one when any candidates exist
    and ratio > 0). Only the order of q matters, so any strictly increasing
    transform of the critic selects the same states.
    """
    candidates = np.asarray(candidates, dtype=float)
    if len(candidates) == 0:
        return candidates
    actions = subpolicy.predict(candidates)
    q = critic_values(critic, candidates, actions)
    order = np.argsort(q, kind="stable")
    count = int(math.floor(ratio * len(candidates)))
    if count < 1 and ratio > 0:
        count = 1
    return candidates[order[:count]]


def _canonical(points: np.ndarray) -> np.ndarray:
    # lexicographic row order: clustering sees a set, not an arrival order
    return points[np.lexsort(points.T[::-1])]


def _too_close(quantizer: Quantizer, point: np.ndarray, min_dist: float) -> bool:
    diff = quantizer.points - point
    if quantizer.scale is not None:
        diff = diff * quantizer.scale
    return bool(np.linalg.norm(diff, axis=1).min() <= min_dist)


def _append_codeword(model: PartitionModel, point: np.ndarray, cfg: DistillConfig) -> PartitionModel:
    template = model.subpolicies[0]
    sub = init_subpolicy(
        model.quantizer.dimension, template.action_low, template.action_high,
        np.random.default_rng([cfg.seed, _TAG_INIT, len(model.subpolicies)]),
    )
    return PartitionModel(
        model.quantizer.add(point),
        list(model.subpolicies) + [sub],
        list(model.region_losses) + [None],
    )


def split_region(X, model: PartitionModel, cfg: DistillConfig, budget: int,
                 cluster_seed: int = None):
    """Cluster X and append the resulting centroids as new regions.

    Stops at the per-region cap or the remaining iteration `budget`, and
    drops centroids closer than `min_codeword_distance` to any codeword
    (including ones added earlier in the same call). Returns the updated
    model and the list of added codewords.
    """
    X = np.asarray(X, dtype=float)
    added = []
    if budget <= 0 or len(X) == 0:
        return model, added
    if cluster_seed is None:
        cluster_seed = cfg.seed

    centroids = find_clusters(_canonical(X), cfg.max_k_clusters, cluster_seed)
    for c in centroids:
        if len(added) >= min(cfg.max_codewords_region, budget):
            break
        if _too_close(model.quantizer, c, cfg.min_codeword_distance):
            continue   # resolution guard
        model = _append_codeword(model, c, cfg)
        added.append(np.asarray(c, dtype=float))
    return model, added


def sample_random_codewords(candidates, model: PartitionModel, cfg: DistillConfig,
                            budget: int, rng: np.random.Generator):
    """The random ablation's split step: draw candidate states directly.

    Uniformly sampled candidate states become codewords themselves, with no
    critic ranking, no clustering, and no resolution guard (the distance
    filter on the candidates and both caps still apply). Growth stops once
    every state sits within `min_codeword_distance` of its own codeword.
    """
    candidates = np.asarray(candidates, dtype=float)
    added = []
    if budget <= 0 or len(candidates) == 0:
        return model, added
    for j in rng.permutation(len(candidates)):
        if len(added) >= min(cfg.max_codewords_region, budget):
            break
        point = candidates[j]
        if _too_close(model.quantizer, point, 0.0):
            continue   # skip exact duplicates only
        model = _append_codeword(model, point, cfg)
        added.append(point.copy())
    return model, added


def init_partition(dataset: Dataset, cfg: DistillConfig) -> PartitionModel:
    """One region: the first state of the first episode becomes codeword 0."""
    if not dataset.episodes or dataset.n_pairs == 0:
        raise InvalidArgumentError("dataset is empty")
    scale = None
    if cfg.standardize:
        std = dataset.all_states().std(axis=0)
        scale = 1.0 / np.where(std > 0, std, 1.0)
    quantizer = Quantizer(dataset.first_state[None, :], scale=scale)
    sub = init_subpolicy(
        dataset.meta.state_dim,
        dataset.meta.action_low,
        dataset.meta.action_high,
        np.random.default_rng([cfg.seed, _TAG_INIT, 0]),
    )
    return PartitionModel(quantizer, [sub], [None])


def distill(dataset: Dataset, critic, cfg: DistillConfig,
            eval_env=None, eval_episodes: int = 20, eval_seed: int = 10_000,
            target_return: float = None, n_threads: int = 1) -> DistillResult:
    """Run the full loop for `cfg.n_iterations` iterations.

    Per iteration: route all dataset pairs to regions, train every subpolicy
    on its bucket (empty buckets keep their parameters), then split regions
    in decreasing training-loss order -- except on the final iteration, which
    only trains, so every subpolicy has been fitted after the last codeword
    insertion. In random mode the critic ranking and clustering are replaced
    by seeded uniform draws from the candidate states, which become codewords
    directly (the distance filter, caps, and resolution guard still apply).

    With `eval_env` set, the model is evaluated after each training phase and
    recorded; if `target_return` is also set, the loop stops once the mean
    return reaches it. Region training runs on `n_threads` threads (the
    buckets are independent, so the result does not depend on the count).
    """
    if cfg.mode == "critic" and critic is None:
        raise InvalidArgumentError("critic mode requires a critic")
    model = init_partition(dataset, cfg)
    states = dataset.all_states()
    actions = dataset.all_actions()

    history = []
    counts = []
    for it in range(cfg.n_iterations):
        buckets = model.quantizer.assign_all(states)
        trainable = [i for i in range(model.n_regions) if buckets.get(i)]
        if n_threads > 1 and len(trainable) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                futures = {
                    i: pool.submit(train, model.subpolicies[i],
                                   states[buckets[i]], actions[buckets[i]], cfg.train)
                    for i in trainable
                }
            for i, fut in futures.items():
                model.subpolicies[i], report = fut.result()
                model.region_losses[i] = report.final_mean_loss
        else:
            for i in trainable:
                model.subpolicies[i], report = train(
                    model.subpolicies[i], states[buckets[i]], actions[buckets[i]], cfg.train
                )
                model.region_losses[i] = report.final_mean_loss

        eval_return = None
        reached_target = False
        if eval_env is not None:
            summary = evaluate(eval_env, model.predict, eval_episodes, eval_seed)
            eval_return = summary.mean_return
            reached_target = target_return is not None and eval_return >= target_return

        if it < cfg.n_iterations - 1 and not reached_target:
            added_this_iter = 0
            order = sorted(
                (i for i in range(model.n_regions) if model.region_losses[i] is not None),
                key=lambda i: (-model.region_losses[i], i),
            )
            for i in order:
                if added_this_iter >= cfg.max_codewords_iteration:
                    break
                rows = buckets.get(i)
                if not rows:
                    continue
                cands = candidate_states(
                    states[rows], model.quantizer.points[i],
                    cfg.min_codeword_distance, scale=model.quantizer.scale,
                )
                if len(cands) == 0:
                    continue
                budget = cfg.max_codewords_iteration - added_this_iter
                if cfg.mode == "critic":
                    chosen = select_low_value(
                        cands, model.subpolicies[i], critic, cfg.value_ratio_threshold
                    )
                    if len(chosen) == 0:
                        continue
                    model, added = split_region(
                        chosen, model, cfg, budget,
                        cluster_seed=_derive_seed(cfg.seed, _TAG_CLUSTER, it, i),
                    )
                else:
                    rng = np.random.default_rng([cfg.seed, _TAG_RANDOM_SELECT, it, i])
                    model, added = sample_random_codewords(cands, model, cfg, budget, rng)
                added_this_iter += len(added)

        history.append(IterationRecord(
            iteration=it,
            region_count=model.n_regions,
            region_losses=list(model.region_losses),
            eval_return=eval_return,
        ))
        counts.append(model.n_regions)
        if reached_target:
            break

    converged_at = None
    for t in range(len(counts) - 2):
        if counts[t] == counts[t + 1] == counts[t + 2]:
            converged_at = t
            break

    return DistillResult(model=model, history=history, converged_at=converged_at)

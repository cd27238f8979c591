import numpy as np
import pytest

from vqdistill import (
    Critic,
    DistillConfig,
    InvalidArgumentError,
    LinearSubpolicy,
    MonteCarloCritic,
    PartitionModel,
    TrainConfig,
    candidate_states,
    distill,
    init_partition,
    make_env,
    make_scripted_teacher,
    model_predict,
    rollout,
    select_low_value,
    split_region,
)
from vqdistill.geometry import Quantizer
from vqdistill.linear_policy import init_subpolicy

from oracles import linear_scan_nearest


def small_config(**overrides):
    base = dict(
        min_codeword_distance=0.6, value_ratio_threshold=0.5,
        max_codewords_region=2, max_codewords_iteration=3,
        n_iterations=6, seed=0,
        train=TrainConfig(n_epochs=40, seed=0),
    )
    base.update(overrides)
    return DistillConfig(**base)


@pytest.fixture(scope="module")
def sg_setup():
    env = make_env("simplegoal")
    teacher = make_scripted_teacher(env)
    dataset, _ = rollout(env, teacher, 40, seed=11)
    critic = MonteCarloCritic(env, teacher, gamma=0.99, horizon=60)
    return env, teacher, dataset, critic


class TableCritic(Critic):
    """Maps each state to a preassigned value (for forced orderings)."""

    def __init__(self, table):
        self.table = {tuple(k): v for k, v in table}

    def values(self, states, actions):
        return np.array([self.table[tuple(s)] for s in states])


def test_init_partition_uses_first_state(sg_setup):
    _, _, dataset, _ = sg_setup
    model = init_partition(dataset, small_config())
    assert model.n_regions == 1
    assert len(model.subpolicies) == 1
    assert np.array_equal(model.quantizer.points[0], dataset.first_state)


def test_init_partition_deterministic(sg_setup):
    _, _, dataset, _ = sg_setup
    a = init_partition(dataset, small_config())
    b = init_partition(dataset, small_config())
    assert np.array_equal(a.quantizer.points, b.quantizer.points)
    assert np.array_equal(a.subpolicies[0].weights, b.subpolicies[0].weights)


def test_init_partition_empty_dataset(sg_setup):
    _, _, dataset, _ = sg_setup
    import dataclasses
    empty = dataclasses.replace(dataset, episodes=[])
    with pytest.raises(InvalidArgumentError):
        init_partition(empty, small_config())


def test_candidate_states_none_beyond():
    states = np.array([[0.1, 0.0], [0.0, 0.2]])
    assert len(candidate_states(states, [0.0, 0.0], 0.5)) == 0


def test_candidate_states_threshold():
    states = np.array([[0.1, 0.0], [1.0, 0.0]])
    got = candidate_states(states, [0.0, 0.0], 0.5)
    assert got.shape == (1, 2)
    assert np.array_equal(got[0], [1.0, 0.0])


def test_candidate_states_matches_direct_filter():
    rng = np.random.default_rng(2)
    states = rng.random((400, 2))
    center = np.array([0.5, 0.5])
    got = candidate_states(states, center, 0.3)
    keep = [s for s in states if np.sqrt(((s - center) ** 2).sum()) > 0.3]
    assert len(got) == len(keep)
    assert np.allclose(got, np.array(keep))


def _dummy_subpolicy(state_dim=2, action_dim=2):
    return LinearSubpolicy(np.zeros((action_dim, state_dim)), np.zeros(action_dim),
                           -np.ones(action_dim), np.ones(action_dim))


def test_select_low_value_full_ratio_sorted():
    states = np.array([[float(i), 0.0] for i in range(6)])
    critic = TableCritic([(s, 10.0 - i) for i, s in enumerate(map(tuple, states))])
    got = select_low_value(states, _dummy_subpolicy(), critic, 1.0)
    assert np.array_equal(got, states[::-1])


def test_select_low_value_bottom_half():
    states = np.array([[float(i), 0.0] for i in range(10)])
    critic = TableCritic([(s, float(i)) for i, s in enumerate(map(tuple, states))])
    got = select_low_value(states, _dummy_subpolicy(), critic, 0.5)
    assert np.array_equal(got, states[:5])


def test_select_low_value_matches_sort_oracle():
    rng = np.random.default_rng(5)
    states = rng.random((50, 2))
    values = rng.normal(size=50)
    critic = TableCritic(list(zip(map(tuple, states), values)))
    got = select_low_value(states, _dummy_subpolicy(), critic, 0.3)
    want = states[np.argsort(values, kind="stable")[:15]]
    assert np.array_equal(got, want)


def test_select_low_value_keeps_at_least_one():
    states = np.array([[1.0, 0.0], [2.0, 0.0]])
    critic = TableCritic([((1.0, 0.0), 5.0), ((2.0, 0.0), 1.0)])
    got = select_low_value(states, _dummy_subpolicy(), critic, 0.1)
    assert np.array_equal(got, [[2.0, 0.0]])


def _model_with(points):
    q = Quantizer(np.asarray(points, dtype=float))
    subs = [_dummy_subpolicy(q.dimension) for _ in range(len(q))]
    return PartitionModel(q, subs, [None] * len(q))


def test_split_region_two_blobs():
    rng = np.random.default_rng(1)
    b1 = rng.normal((0, 0), 0.05, (50, 2))
    b2 = rng.normal((5, 5), 0.05, (50, 2))
    model = _model_with([[10.0, 10.0]])
    cfg = small_config(min_codeword_distance=0.5, max_codewords_region=2)
    model2, added = split_region(np.vstack([b1, b2]), model, cfg, budget=5)
    assert len(added) == 2
    assert model2.n_regions == 3
    dists = [min(np.linalg.norm(c - b1.mean(0)), np.linalg.norm(c - b2.mean(0))) for c in added]
    assert max(dists) < 0.05


def test_split_region_cap_enforcement():
    rng = np.random.default_rng(3)
    blobs = np.vstack([rng.normal((i * 4, 0), 0.05, (30, 2)) for i in range(3)])
    model = _model_with([[20.0, 20.0]])
    cfg = small_config(min_codeword_distance=0.5, max_codewords_region=1)
    model2, added = split_region(blobs, model, cfg, budget=5)
    assert len(added) == 1
    assert model2.n_regions == 2


def test_split_region_budget_zero():
    model = _model_with([[0.0, 0.0]])
    _, added = split_region(np.random.default_rng(0).random((20, 2)), model,
                            small_config(), budget=0)
    assert added == []


def test_split_region_resolution_guard():
    rng = np.random.default_rng(4)
    pts = rng.normal((1.0, 1.0), 0.02, (40, 2))
    model = _model_with([[1.0, 1.0]])
    model2, added = split_region(pts, model, small_config(min_codeword_distance=0.6), budget=5)
    assert added == []
    assert model2.n_regions == 1


def test_distill_no_candidates_single_region(sg_setup):
    _, _, dataset, critic = sg_setup
    res = distill(dataset, critic, small_config(min_codeword_distance=5.0))
    assert res.model.n_regions == 1
    assert all(r.region_count == 1 for r in res.history)


def test_distill_monotone_counts_and_caps(sg_setup):
    _, _, dataset, critic = sg_setup
    cfg = small_config(min_codeword_distance=0.3, n_iterations=8)
    res = distill(dataset, critic, cfg)
    counts = [r.region_count for r in res.history]
    assert counts == sorted(counts)
    assert counts[0] >= 1
    for before, after in zip(counts, counts[1:]):
        assert after - before <= cfg.max_codewords_iteration
    assert counts[-1] <= 1 + cfg.n_iterations * cfg.max_codewords_iteration
    # the final iteration never splits
    assert counts[-1] == counts[-2]


def test_distill_trains_every_populated_region(sg_setup):
    _, _, dataset, critic = sg_setup
    res = distill(dataset, critic, small_config(n_iterations=4))
    buckets = res.model.quantizer.assign_all(dataset.all_states())
    for i, rows in buckets.items():
        if rows:
            assert res.model.region_losses[i] is not None


def test_distill_deterministic(sg_setup):
    _, _, dataset, critic = sg_setup
    cfg = small_config(n_iterations=4)
    a = distill(dataset, critic, cfg)
    b = distill(dataset, critic, cfg)
    assert np.array_equal(a.model.quantizer.points, b.model.quantizer.points)
    for pa, pb in zip(a.model.subpolicies, b.model.subpolicies):
        assert np.array_equal(pa.weights, pb.weights)
        assert np.array_equal(pa.biases, pb.biases)


class ShiftedCritic(Critic):
    def __init__(self, inner):
        self.inner = inner

    def values(self, states, actions):
        return 2.0 * np.asarray(self.inner.values(states, actions)) + 7.0


def test_distill_rank_invariance(sg_setup):
    _, _, dataset, critic = sg_setup
    cfg = small_config(n_iterations=4)
    a = distill(dataset, critic, cfg)
    b = distill(dataset, ShiftedCritic(critic), cfg)
    assert np.array_equal(a.model.quantizer.points, b.model.quantizer.points)
    for pa, pb in zip(a.model.subpolicies, b.model.subpolicies):
        assert np.array_equal(pa.weights, pb.weights)


def test_distill_random_mode_caps_and_determinism(sg_setup):
    _, _, dataset, _ = sg_setup
    cfg = small_config(mode="random", n_iterations=5, min_codeword_distance=0.3)
    a = distill(dataset, None, cfg)
    b = distill(dataset, None, cfg)
    counts = [r.region_count for r in a.history]
    assert counts == sorted(counts)
    for before, after in zip(counts, counts[1:]):
        assert after - before <= cfg.max_codewords_iteration
    assert np.array_equal(a.model.quantizer.points, b.model.quantizer.points)


def test_distill_critic_mode_needs_critic(sg_setup):
    _, _, dataset, _ = sg_setup
    with pytest.raises(InvalidArgumentError):
        distill(dataset, None, small_config())


def test_distill_eval_hook_and_early_stop(sg_setup):
    env, _, dataset, critic = sg_setup
    res = distill(dataset, critic, small_config(n_iterations=6),
                  eval_env=env, eval_episodes=5, eval_seed=3, target_return=-100.0)
    # an impossible-to-miss target stops after the first iteration
    assert len(res.history) == 1
    assert res.history[0].eval_return is not None


def test_converged_at_window():
    env = make_env("simplegoal")
    teacher = make_scripted_teacher(env)
    dataset, _ = rollout(env, teacher, 20, seed=5)
    critic = MonteCarloCritic(env, teacher, gamma=0.99, horizon=60)
    res = distill(dataset, critic, small_config(n_iterations=8))
    counts = [r.region_count for r in res.history]
    t = res.converged_at
    if t is not None:
        assert counts[t] == counts[t + 1] == counts[t + 2]
        for earlier in range(t):
            window = counts[earlier:earlier + 3]
            assert not (len(window) == 3 and len(set(window)) == 1)


def test_model_predict_single_region_matches_subpolicy():
    model = _model_with([[0.0, 0.0]])
    rng = np.random.default_rng(0)
    for s in rng.random((20, 2)):
        assert np.array_equal(model_predict(model, s), model.subpolicies[0].predict(s))


def test_model_predict_routing_matches_linear_scan():
    rng = np.random.default_rng(7)
    points = rng.random((12, 3))
    q = Quantizer(points)
    subs = []
    for i in range(12):
        sub = _dummy_subpolicy(3, 1)
        sub.biases = np.array([float(i) / 20.0])   # distinct outputs identify the region
        subs.append(sub)
    model = PartitionModel(q, subs, [None] * 12)
    for s in rng.random((1000, 3)):
        want = linear_scan_nearest(points, s)
        assert model_predict(model, s)[0] == pytest.approx(want / 20.0)


def test_table_style_model_constant_region():
    codewords = np.array([[-0.880, 0.002], [-0.573, 0.000], [-0.175, 0.044]])
    subs = [
        LinearSubpolicy(np.array([[-8.972, 30.034]]), np.array([-6.660]), [-1.0], [1.0]),
        LinearSubpolicy(np.array([[-1.846, 39.945]]), np.array([-1.567]), [-1.0], [1.0]),
        LinearSubpolicy(np.array([[0.0, 0.0]]), np.array([1.0]), [-1.0], [1.0]),
    ]
    model = PartitionModel(Quantizer(codewords), subs, [None] * 3)
    s = np.array([-0.175, 0.044])
    assert model.quantizer.nearest(s) == 2
    assert model_predict(model, s)[0] == 1.0

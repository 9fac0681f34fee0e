"""Learner tests: hand-derived Q-lambda updates, dot-product oracle, reward
contract, action-selection statistics and the tabular value-iteration check."""
import math

import numpy as np
import pytest

from objlearn.learning import (
    DONT_CARE,
    DivergenceError,
    LearnerParams,
    ObjectiveSpec,
    QLambdaLearner,
    RewardConfig,
    compute_reward,
    matches,
    reward_value,
)

REWARDS = RewardConfig()


def make_learner(alpha=0.3, gamma=0.9, lam=0.9, n_actions=9, n_features=64, watkins=False):
    return QLambdaLearner(
        ObjectiveSpec(np.array([-1, -1, -1, 1], dtype=np.int8)),
        LearnerParams(alpha=alpha, gamma=gamma, lambda_=lam, watkins_cut=watkins),
        n_actions=n_actions,
        n_features=n_features,
    )


def random_features(rng, n_features=64):
    f = np.zeros(n_features, dtype=np.int8)
    f[rng.integers(0, 4)] = rng.integers(0, 2)
    f[4 + rng.integers(0, 30)] = 1
    f[34 + rng.integers(0, 30)] = 1
    return f


# -- q values ---------------------------------------------------------------


def test_q_value_zero_weights():
    lrn = make_learner()
    f = random_features(np.random.default_rng(0))
    assert lrn.q_value(f, 3) == 0.0


def test_q_value_counts_active_bits():
    lrn = make_learner()
    lrn.w[2, :] = 1.0
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    f[40] = 1
    assert lrn.q_value(f, 2) == 2.0
    assert lrn.q_value(f, 1) == 0.0


def test_q_value_matches_dot_product_oracle():
    rng = np.random.default_rng(42)
    lrn = make_learner()
    lrn.w = rng.normal(size=(9, 64))
    for _ in range(200):
        f = rng.integers(0, 2, size=64).astype(np.int8)
        a = int(rng.integers(9))
        assert lrn.q_value(f, a) == pytest.approx(float(lrn.w[a] @ f), rel=1e-12)


# -- matching and rewards -----------------------------------------------------


def test_matches_dont_care_semantics():
    pattern = np.array([DONT_CARE, DONT_CARE, DONT_CARE, 1], dtype=np.int8)
    assert matches(pattern, np.array([1, 0, 0, 1], dtype=np.int8))
    assert not matches(pattern, np.array([1, 1, 1, 0], dtype=np.int8))
    exact = np.array([0, 1, 0, 0], dtype=np.int8)
    assert matches(exact, np.array([0, 1, 0, 0], dtype=np.int8))
    assert not matches(exact, np.array([1, 1, 0, 0], dtype=np.int8))


def test_reward_contract():
    spec = ObjectiveSpec(np.array([0, 1, 0, 0], dtype=np.int8))
    hit = np.array([0, 1, 0, 0], dtype=np.int8)
    miss = np.array([0, 0, 0, 0], dtype=np.int8)
    assert compute_reward(spec, hit, False, REWARDS) == 100.0
    assert compute_reward(spec, miss, False, REWARDS) == -10.0
    assert compute_reward(spec, miss, True, REWARDS) == -110.0
    assert compute_reward(spec, hit, True, REWARDS) == 0.0
    allowed = {100.0, -10.0, -110.0, 0.0}
    for m in (True, False):
        for b in (True, False):
            assert reward_value(m, b, REWARDS) in allowed


# -- td updates ---------------------------------------------------------------


def test_terminal_update_from_zero_weights():
    # one terminal step: every active (action, feature) weight becomes alpha*R
    lrn = make_learner(alpha=0.3)
    f = np.zeros(64, dtype=np.int8)
    f[1] = f[10] = f[40] = 1
    f2 = random_features(np.random.default_rng(1))
    delta = lrn.td_update(f, 4, 100.0, f2, terminal=True)
    assert delta == 100.0
    expect = np.zeros((9, 64))
    expect[4, [1, 10, 40]] = 0.3 * 100.0
    np.testing.assert_array_equal(lrn.w, expect)


def test_lambda_zero_clears_traces():
    lrn = make_learner(lam=0.0)
    f = random_features(np.random.default_rng(2))
    lrn.td_update(f, 0, -10.0, f)
    assert np.all(lrn.e == 0.0)


def test_two_step_trace_decay():
    # a feature active only at step 1 carries trace (gamma*lambda)^1 = 0.81
    # into step 2's weight update
    lrn = make_learner(alpha=1.0, gamma=0.9, lam=0.9)
    f1 = np.zeros(64, dtype=np.int8)
    f1[5] = 1
    f2 = np.zeros(64, dtype=np.int8)
    f2[6] = 1
    lrn.td_update(f1, 0, 0.0, f2)
    assert lrn.e[0, 5] == pytest.approx(0.81)
    w_before = lrn.w[0, 5]
    delta = lrn.td_update(f2, 0, 10.0, f1)
    assert lrn.w[0, 5] == pytest.approx(w_before + 1.0 * delta * 0.81)


def test_replacing_traces_stay_in_unit_interval():
    rng = np.random.default_rng(3)
    lrn = make_learner()
    for _ in range(500):
        f = random_features(rng)
        f2 = random_features(rng)
        lrn.td_update(f, int(rng.integers(9)), float(rng.normal(0, 50)), f2)
        assert np.all(lrn.e >= 0.0) and np.all(lrn.e <= 1.0)


def test_bootstrap_uses_max_over_next_actions():
    lrn = make_learner(alpha=0.5, gamma=0.9, lam=0.0)
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    f2 = np.zeros(64, dtype=np.int8)
    f2[20] = 1
    lrn.w[3, 20] = 7.0
    lrn.w[5, 20] = -2.0
    delta = lrn.td_update(f, 0, -10.0, f2)
    assert delta == pytest.approx(-10.0 + 0.9 * 7.0)
    assert lrn.w[0, 10] == pytest.approx(0.5 * delta)


def test_watkins_cut_clears_traces_after_nongreedy_step():
    lrn = make_learner(watkins=True)
    f = random_features(np.random.default_rng(4))
    lrn.td_update(f, 2, 1.0, f, behavior_was_greedy=False)
    assert np.all(lrn.e == 0.0)
    lrn2 = make_learner(watkins=False)
    lrn2.td_update(f, 2, 1.0, f, behavior_was_greedy=False)
    assert np.any(lrn2.e > 0.0)


def test_divergence_raises():
    lrn = make_learner()
    lrn.w[:] = np.nan
    f = random_features(np.random.default_rng(5))
    with pytest.raises(DivergenceError):
        lrn.td_update(f, 0, 1.0, f)


def test_avg_td_error_is_running_mean_of_abs():
    lrn = make_learner(alpha=1e-9)  # keep weights ~0 so deltas equal rewards
    f = np.zeros(64, dtype=np.int8)
    lrn.td_update(f, 0, 4.0, f, terminal=True)
    assert lrn.avg_td_error() == pytest.approx(4.0)
    lrn.td_update(f, 0, -4.0, f, terminal=True)
    assert lrn.avg_td_error() == pytest.approx(4.0)  # mean of |4|, |-4|


def test_avg_td_error_matches_batch_oracle():
    rng = np.random.default_rng(6)
    lrn = make_learner()
    deltas = []
    for _ in range(300):
        f = random_features(rng)
        f2 = random_features(rng)
        deltas.append(
            lrn.td_update(f, int(rng.integers(9)), float(rng.normal(0, 20)), f2)
        )
    assert lrn.avg_td_error() == pytest.approx(np.abs(deltas).mean(), rel=1e-9)
    assert lrn.updates == 300


def test_off_policy_independence_update_order():
    # learners sharing a transition stream end up identical regardless of the
    # order they are updated in
    rng = np.random.default_rng(7)
    stream = [
        (random_features(rng), int(rng.integers(9)), float(rng.normal()), random_features(rng))
        for _ in range(200)
    ]
    group_a = [make_learner() for _ in range(3)]
    group_b = [make_learner() for _ in range(3)]
    for f, a, r, f2 in stream:
        for lrn in group_a:
            lrn.td_update(f, a, r, f2)
        for lrn in reversed(group_b):
            lrn.td_update(f, a, r, f2)
    for la, lb in zip(group_a, group_b):
        np.testing.assert_array_equal(la.w, lb.w)


# -- action selection ---------------------------------------------------------


def test_greedy_unique_argmax():
    lrn = make_learner()
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    lrn.w[2, 10] = 1.0
    rng = np.random.default_rng(8)
    assert all(lrn.greedy_action(f, rng) == 2 for _ in range(20))


def test_greedy_tie_statistics():
    lrn = make_learner()
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    lrn.w[2, 10] = 1.0
    lrn.w[5, 10] = 1.0
    rng = np.random.default_rng(9)
    picks = np.array([lrn.greedy_action(f, rng) for _ in range(10_000)])
    assert set(picks) == {2, 5}
    assert abs((picks == 2).mean() - 0.5) < 0.05


def test_greedy_all_tied_is_uniform():
    lrn = make_learner()
    f = random_features(np.random.default_rng(10))
    rng = np.random.default_rng(11)
    picks = np.array([lrn.greedy_action(f, rng) for _ in range(9000)])
    counts = np.bincount(picks, minlength=9)
    assert np.all(counts > 0)
    assert abs(counts.max() / len(picks) - 1 / 9) < 0.02


def test_epsilon_one_is_uniform():
    lrn = make_learner()
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    lrn.w[2, 10] = 5.0
    rng = np.random.default_rng(12)
    picks = np.array([lrn.epsilon_greedy(f, 1.0, rng) for _ in range(100_000)])
    freqs = np.bincount(picks, minlength=9) / len(picks)
    assert np.all(np.abs(freqs - 1 / 9) < 0.01)


def test_epsilon_zero_is_greedy():
    lrn = make_learner()
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    lrn.w[7, 10] = 5.0
    rng = np.random.default_rng(13)
    assert all(lrn.epsilon_greedy(f, 0.0, rng) == 7 for _ in range(100))


def test_epsilon_mixture_arithmetic():
    # unique greedy action E: P(E) = (1 - eps) + eps/9
    lrn = make_learner()
    f = np.zeros(64, dtype=np.int8)
    f[10] = 1
    lrn.w[2, 10] = 5.0
    rng = np.random.default_rng(14)
    picks = np.array([lrn.epsilon_greedy(f, 0.3, rng) for _ in range(50_000)])
    expected = 0.7 + 0.3 / 9
    assert abs((picks == 2).mean() - expected) < 0.01


def test_weight_serialization_round_trip():
    rng = np.random.default_rng(15)
    lrn = make_learner()
    for _ in range(50):
        lrn.td_update(random_features(rng), int(rng.integers(9)), float(rng.normal()), random_features(rng))
    state = lrn.state_dict()
    fresh = make_learner()
    fresh.load_state_dict(state)
    np.testing.assert_array_equal(fresh.w, lrn.w)  # binary-exact through lists
    assert fresh.avg_td_error() == lrn.avg_td_error()

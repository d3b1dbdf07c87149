import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabspectrum.policies import UCB, FixedArm, PolicySpec, Thompson, make_policy
from mabspectrum.rng import RandomStream


def batch_stream(n, seed=4):
    return RandomStream(seed, np.arange(n, dtype=np.uint64))


# UCB index

def test_unpulled_arm_is_infinite():
    assert UCB.from_state(1.0, [3, 0], [1.0, 0.0]).index(1) == math.inf


def test_alpha_zero_index_is_sample_mean():
    assert UCB.from_state(0.0, [10, 4], [7.0, 1.0]).index(0) == pytest.approx(0.7, abs=1e-15)


def test_index_against_high_precision_oracle():
    mpmath.mp.dps = 50
    expected = mpmath.mpf("0.6") + mpmath.sqrt(mpmath.log(100) / 20)
    assert float(expected) == pytest.approx(1.07985, abs=5e-6)
    policy = UCB.from_state(1.0, [10, 90], [6.0, 30.0], t=100)
    assert policy.index(0) == pytest.approx(float(expected), rel=1e-14)


def test_index_arm_out_of_range():
    with pytest.raises(IndexError):
        UCB(3).index(3)


def test_log_of_t_clamped_at_one():
    assert UCB.from_state(1.0, [1], [0.4], t=1).index(0) == pytest.approx(0.4)
    assert UCB.from_state(1.0, [1], [0.4], t=0).index(0) == pytest.approx(0.4)


# UCB select / update

def test_fresh_state_selects_arm_zero():
    assert UCB(5, 0.3).select()[0] == 0


def test_unpulled_beats_finite():
    assert UCB.from_state(0.5, [1, 0], [1.0, 0.0]).select()[0] == 1


def test_greedy_selects_best_mean():
    assert UCB.from_state(0.0, [10, 10], [7.0, 6.0]).select()[0] == 0


def test_update_fresh():
    p = UCB(3)
    p.update(0, 1.0)
    assert p.counts[0].tolist() == [1, 0, 0]
    assert p.means()[0, 0] == 1.0
    assert p.t[0] == 1


def test_update_running_mean():
    p = UCB.from_state(1.0, [2], [1.0])
    p.update(0, 0.5)
    assert p.counts[0, 0] == 3
    assert p.means()[0, 0] == 0.5


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
def test_update_rejects_rewards_outside_unit_interval(bad):
    with pytest.raises(ValueError):
        UCB(2).update(0, bad)


def test_update_rejects_bad_arm():
    with pytest.raises(IndexError):
        UCB(2).update(2, 0.5)


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        UCB(2, alpha=1.5)


def test_cold_start_covers_every_arm():
    p = UCB(6, 0.7)
    for r in range(6):
        arm = p.select()
        assert arm[0] == r
        p.update(arm, 0.3)
    assert p.counts[0].tolist() == [1] * 6


counts_sums = st.integers(1, 500).flatmap(
    lambda n: st.tuples(st.just(n), st.floats(0, n, allow_nan=False))
)


@settings(max_examples=200, deadline=None)
@given(counts_sums, st.integers(2, 10**6), st.floats(0, 1), st.floats(0, 1))
def test_index_increasing_in_alpha(ns, extra, a1, a2):
    n, s = ns
    lo, hi = sorted((a1, a2))
    if hi - lo < 1e-6:
        return
    t = n + extra
    i_lo = UCB.from_state(lo, [n, 1], [s, 0.0], t=t).index(0)
    i_hi = UCB.from_state(hi, [n, 1], [s, 0.0], t=t).index(0)
    assert i_hi > i_lo


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1), st.floats(0, 1), st.integers(1, 1000), st.integers(1, 1000))
def test_index_decreasing_in_count(alpha, s, n, extra):
    t = 10**7
    small = UCB.from_state(alpha, [n, 1], [s, 0.0], t=t).index(0)
    large = UCB.from_state(alpha, [n + extra, 1], [s, 0.0], t=t).index(0)
    assert large < small


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.floats(0, 1)), min_size=1, max_size=8))
def test_greedy_is_argmax_of_sample_means(arms):
    counts = [n for n, _ in arms]
    sums = [n * f for n, f in arms]
    p = UCB.from_state(0.0, counts, sums)
    assert p.select()[0] == int(np.argmax(np.asarray(sums) / np.asarray(counts)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0, 1)), max_size=40))
def test_counts_sum_to_t(updates):
    p = UCB(5, 0.5)
    for arm, r in updates:
        p.update(arm, r)
    assert p.counts.sum() == p.t[0] == len(updates)
    assert np.all(p.reward_sums <= p.counts)


def test_batched_rows_match_single_policies():
    rng = np.random.default_rng(0)
    alphas = np.array([0.0, 0.3, 1.0])
    batch = UCB(4, alphas, n_envs=3)
    singles = [UCB(4, a) for a in alphas]
    for _ in range(200):
        arms = batch.select()
        r = rng.random(3)
        batch.update(arms, r)
        for i, p in enumerate(singles):
            a = p.select()
            assert a[0] == arms[i]
            p.update(a, r[i])
    for i, p in enumerate(singles):
        np.testing.assert_array_equal(p.counts[0], batch.counts[i])


# Thompson sampling

def test_ts_fresh_state_uniform_over_arms():
    n = 10**5
    arms = Thompson(4, n_envs=n).select(batch_stream(n))
    freq = np.bincount(arms, minlength=4) / n
    assert np.all(np.abs(freq - 0.25) < 0.01)


def test_ts_fresh_frequency_brute_force():
    # independent cross-check: argmax of four i.i.d. uniforms from numpy's own generator
    u = np.random.default_rng(1).random((10**5, 4))
    freq = np.bincount(u.argmax(axis=1), minlength=4) / 10**5
    assert np.all(np.abs(freq - 0.25) < 0.01)


def test_ts_concentrated_posterior():
    n = 10**4
    p = Thompson(2, n_envs=n)
    p.successes[:] = [10**6, 0]
    p.failures[:] = [0, 10**6]
    arms = p.select(batch_stream(n, seed=9))
    assert np.mean(arms == 0) >= 0.999


def test_ts_single_arm():
    p = Thompson(1, n_envs=1000)
    assert np.all(p.select(batch_stream(1000)) == 0)


def test_ts_update_deterministic_for_binary_rewards():
    p = Thompson(3, n_envs=100)
    s = batch_stream(100)
    p.update(1, 1.0, s)
    assert np.all(p.successes[:, 1] == 1) and np.all(p.failures == 0)
    p.update(2, 0.0, s)
    assert np.all(p.failures[:, 2] == 1) and np.all(p.successes[:, 2] == 0)


def test_ts_update_binarises_fractional_reward():
    n = 10**6
    p = Thompson(2, n_envs=n)
    p.update(0, 0.25, batch_stream(n, seed=12))
    assert abs(p.successes[:, 0].mean() - 0.25) < 0.005
    assert np.all(p.successes + p.failures == [[1, 0]])


def test_ts_update_rejects_bad_reward():
    with pytest.raises(ValueError):
        Thompson(2).update(0, 1.2, RandomStream(1))


def test_ts_trajectory_reproducible():
    def trajectory():
        p = Thompson(4)
        s = RandomStream(31, 2)
        out = []
        for _ in range(300):
            a = p.select(s)
            out.append(int(a[0]))
            p.update(a, 0.6 if a[0] == 2 else 0.3, s)
        return out, p.successes.copy(), p.failures.copy()

    a, b = trajectory(), trajectory()
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])
    assert a[1].sum() + a[2].sum() == 300


def test_ts_from_state():
    p = Thompson.from_state([3, 1], [2, 0])
    assert p.t[0] == 6


# specs

@pytest.mark.parametrize(
    "doc,cls,name",
    [
        ({"kind": "ucb", "alpha": 0.14}, UCB, "ucb-alpha-0.14"),
        ({"kind": "greedy"}, UCB, "greedy"),
        ({"kind": "ts"}, Thompson, "ts"),
        ({"kind": "fixed", "arm": 1}, FixedArm, "fixed-arm-1"),
        ({"kind": "ts", "label": "thompson"}, Thompson, "thompson"),
    ],
)
def test_policy_spec_round_trip(doc, cls, name):
    spec = PolicySpec.from_dict(doc)
    assert spec.to_dict() == doc
    assert spec.name == name
    assert isinstance(make_policy(spec, 3), cls)


def test_greedy_spec_has_zero_alpha():
    assert make_policy(PolicySpec("greedy"), 2).alpha[0] == 0.0


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"kind": "ucb"}, "alpha"),
        ({"kind": "ucb", "alpha": 2}, "alpha"),
        ({"kind": "exp3"}, "kind"),
        ({"kind": "ts", "alpha": 0.1}, "alpha"),
        ({"kind": "ts", "gamma": 1}, "gamma"),
        ({"alpha": 0.1}, "kind"),
    ],
)
def test_policy_spec_errors(doc, key):
    with pytest.raises(ValueError, match=f"^{key}"):
        PolicySpec.from_dict(doc)

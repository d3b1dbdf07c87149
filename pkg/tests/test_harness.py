import numpy as np
import pytest

from mabspectrum import rewards as rw
from mabspectrum.game import BanditInstance, run_episode
from mabspectrum.harness import (
    SIM1_SWEEP,
    SIM2_SWEEP,
    AlphaSweep,
    ExperimentConfig,
    alpha_sweep,
    monte_carlo,
    sim1_instance,
    sim2_instance,
    two_agent_monte_carlo,
)
from mabspectrum.policies import PolicySpec, make_policy, ucb
from mabspectrum.rng import RandomStream

TS = PolicySpec("ts")


def config(instance, policies, horizon=50, n_runs=20, seed=3, **kw):
    return ExperimentConfig(instance, tuple(policies), horizon, n_runs, seed, **kw)


def naive_curves(cfg, spec):
    """Two-pass oracle: play every run separately, then average."""
    reward = []
    regret = []
    for r in range(cfg.n_runs):
        res = run_episode(cfg.instance, spec, cfg.horizon, RandomStream(cfg.master_seed, r), cfg.mode)
        t = np.arange(1, cfg.horizon + 1)
        reward.append(res.reward_curve / t)
        regret.append(res.pseudo_regret_curve / t)
    reward, regret = np.array(reward), np.array(regret)
    mean_r, mean_g = reward.mean(axis=0), regret.mean(axis=0)
    se_r = np.sqrt(((reward - mean_r) ** 2).sum(axis=0) / (cfg.n_runs - 1) / cfg.n_runs)
    return mean_r, se_r, mean_g


def test_single_certain_arm():
    cfg = config(BanditInstance([rw.Bernoulli(1.0)]), [ucb(0.3), TS], n_runs=7)
    for curve in monte_carlo(cfg):
        np.testing.assert_array_equal(curve.avg_reward, 1.0)
        np.testing.assert_array_equal(curve.avg_regret, 0.0)
        np.testing.assert_array_equal(curve.avg_reward_se, 0.0)


@pytest.mark.parametrize("spec", [ucb(0.2), TS])
def test_single_run_equals_running_averages(spec):
    cfg = config(sim1_instance(), [spec], horizon=300, n_runs=1, seed=11)
    (curve,) = monte_carlo(cfg)
    res = run_episode(cfg.instance, spec, 300, RandomStream(11, 0))
    t = np.arange(1, 301)
    np.testing.assert_array_equal(curve.avg_reward, res.reward_curve / t)
    np.testing.assert_array_equal(curve.avg_regret, res.pseudo_regret_curve / t)


@pytest.mark.parametrize("mode", ["pulled-only", "full-table"])
def test_aggregation_matches_naive_oracle(mode):
    specs = [ucb(0.0), ucb(0.5), TS]
    cfg = config(sim1_instance(), specs, horizon=120, n_runs=40, mode=mode)
    for spec, curve in zip(specs, monte_carlo(cfg)):
        mean_r, se_r, mean_g = naive_curves(cfg, spec)
        np.testing.assert_allclose(curve.avg_reward, mean_r, rtol=1e-9)
        np.testing.assert_allclose(curve.avg_regret, mean_g, rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(curve.avg_reward_se[5:], se_r[5:], rtol=1e-6)
        assert curve.n_runs == 40 and curve.avg_reward.size == 120
        assert np.all(curve.avg_reward_se >= 0) and np.all(curve.avg_regret_se >= 0)


def test_full_table_mode_reports_realized_regret():
    cfg = config(sim2_instance(), [ucb(0.3)], horizon=200, n_runs=30, mode="full-table")
    (curve,) = monte_carlo(cfg)
    values = [
        run_episode(cfg.instance, ucb(0.3), 200, RandomStream(3, r), "full-table").realized_regret
        for r in range(30)
    ]
    assert curve.realized_regret == pytest.approx(np.mean(values), rel=1e-9)


def test_parallel_matches_serial_bitwise():
    cfg = config(sim2_instance(), [ucb(0.14), TS], horizon=60, n_runs=2500)
    serial = monte_carlo(cfg, workers=1)
    parallel = monte_carlo(cfg, workers=2)
    for a, b in zip(serial, parallel):
        for name in ("avg_reward", "avg_reward_se", "avg_regret", "avg_regret_se", "pull_share"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_batched_alphas_match_separate_runs():
    cfg = config(sim1_instance(), [ucb(0.14), ucb(0.7)], horizon=80, n_runs=30)
    together = monte_carlo(cfg)
    for spec, curve in zip(cfg.policies, together):
        (alone,) = monte_carlo(config(sim1_instance(), [spec], horizon=80, n_runs=30))
        assert curve.avg_reward.tobytes() == alone.avg_reward.tobytes()


def test_common_random_numbers_across_alpha():
    # on a deterministic two-arm instance every alpha plays identically after cold start
    inst = BanditInstance([rw.Bernoulli(1.0), rw.Bernoulli(0.0)])
    cfg = config(inst, [], horizon=10, n_runs=5, sweep=AlphaSweep(0.14, 0.98, 0.14, extra=(0.0,)))
    result = alpha_sweep(cfg)
    rows = {tuple(r[1:]) for r in result.rows}
    assert len(rows) == 1


def test_identical_policies_give_identical_rows():
    cfg = config(sim1_instance(), [ucb(0.3, label="a"), ucb(0.3, label="b")], horizon=100)
    a, b = monte_carlo(cfg)
    assert a.avg_reward.tobytes() == b.avg_reward.tobytes()


def test_standard_error_scales_with_runs():
    small = monte_carlo(config(sim2_instance(), [TS], horizon=200, n_runs=500))[0]
    large = monte_carlo(config(sim2_instance(), [TS], horizon=200, n_runs=2000))[0]
    ratio = small.final_reward_se / large.final_reward_se
    assert abs(ratio / 2 - 1) < 0.2


def test_sweep_grid_zero_only_is_greedy():
    cfg = config(sim1_instance(), [], horizon=100, sweep=AlphaSweep(0.0, 0.1, 0.5))
    result = alpha_sweep(cfg)
    assert result.alphas == (0.0,)
    (greedy,) = monte_carlo(config(sim1_instance(), [PolicySpec("greedy")], horizon=100))
    assert result.curves[0].avg_reward.tobytes() == greedy.avg_reward.tobytes()


def test_sweep_needs_grid():
    with pytest.raises(ValueError, match="sweep"):
        alpha_sweep(config(sim1_instance(), []))


def test_replication_grids():
    assert SIM1_SWEEP.grid() == (0.0, 0.0464, 0.14, 0.28, 0.42, 0.56, 0.7, 0.84, 0.98)
    assert SIM2_SWEEP.grid() == (0.0464, 0.14, 0.28, 0.42, 0.56, 0.7, 0.84, 0.98)


def test_sweep_validation():
    with pytest.raises(ValueError):
        AlphaSweep(0.5, 0.2, 0.1)
    with pytest.raises(ValueError):
        AlphaSweep(0.1, 0.9, 0.0)
    with pytest.raises(ValueError):
        AlphaSweep(0.1, 0.9, 0.1, extra=(1.5,))


def test_replication_instances():
    np.testing.assert_allclose(sim2_instance().means, [0.20, 0.23, 0.25, 0.21])
    assert sim2_instance().optimal_arm == 2
    assert sim1_instance().optimal_arm == 3


def test_ts_first_selection_uniform():
    n = 40_000
    policy = make_policy(TS, 4, n)
    arms = policy.select(RandomStream(1, np.arange(n, dtype=np.uint64)))
    freq = np.bincount(arms, minlength=4) / n
    assert np.all(np.abs(freq - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n))


def test_pull_share_and_modal_arm():
    (curve,) = monte_carlo(config(sim1_instance(), [ucb(0.14)], horizon=2000, n_runs=64))
    assert curve.pull_share.sum() == pytest.approx(1.0)
    assert curve.modal_arm_runs.sum() == 64
    assert int(np.argmax(curve.modal_arm_runs)) == 3


def test_two_agent_monte_carlo():
    cfg = config(sim2_instance(), [ucb(0.14), TS], horizon=500, n_runs=50)
    curves = two_agent_monte_carlo(cfg)
    assert [c.label for c in curves] == ["agent0-ucb-alpha-0.14", "agent1-ts"]
    assert curves[0].collision_rate == curves[1].collision_rate
    assert 0 < curves[0].collision_rate < 1


def test_config_validation():
    with pytest.raises(ValueError, match="n_runs"):
        config(sim2_instance(), [TS], n_runs=0)
    with pytest.raises(ValueError, match="horizon"):
        config(sim2_instance(), [TS], horizon=0)
    with pytest.raises(ValueError, match="labels"):
        config(sim2_instance(), [TS, TS])
    with pytest.raises(ValueError, match="mode"):
        config(sim2_instance(), [TS], mode="sometimes")


def test_config_dict_round_trip():
    cfg = config(sim1_instance(), [ucb(0.14), TS, PolicySpec("fixed", arm=2)], sweep=SIM1_SWEEP)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

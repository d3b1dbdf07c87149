"""Monte Carlo averaging, alpha sweeps and the two canonical simulations.

Runs are grouped into fixed blocks of ``BLOCK_SIZE`` consecutive run indices.
Each block is simulated as one batch and summarised by per-round means and
centred second moments; blocks are then merged in index order. Because block
boundaries never depend on the number of workers, serial and parallel
executions produce bitwise identical curves.

Run ``r`` always uses stream index ``r``. UCB variants that differ only in
alpha are batched together, so every alpha in a sweep sees the same reward
randomness run for run.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rewards as rw
from .game import MODES, BanditInstance, Simulation
from .policies import UCB, PolicySpec, make_policy, ucb
from .rng import RandomStream

__all__ = [
    "AlphaSweep",
    "ExperimentConfig",
    "AggregateCurve",
    "SweepResult",
    "monte_carlo",
    "two_agent_monte_carlo",
    "alpha_sweep",
    "replicate_sim1",
    "replicate_sim2",
    "sim1_instance",
    "sim2_instance",
    "SIM1_SWEEP",
    "SIM2_SWEEP",
    "BLOCK_SIZE",
]

log = logging.getLogger(__name__)

BLOCK_SIZE = 1024
CHUNK_ROUNDS = 256


@dataclass(frozen=True)
class AlphaSweep:
    """Alpha grid ``start, start + step, ... <= stop`` plus explicit extra points."""

    start: float
    stop: float
    step: float
    extra: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "extra", tuple(self.extra))
        if not self.start < self.stop:
            raise ValueError("sweep.start: must be below sweep.stop")
        if not self.step > 0:
            raise ValueError("sweep.step: must be positive")
        if any(not 0.0 <= a <= 1.0 for a in self.grid()):
            raise ValueError("sweep: grid points must lie in [0, 1]")

    def grid(self) -> tuple[float, ...]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        points = {round(self.start + k * self.step, 12) for k in range(n)}
        points.update(float(a) for a in self.extra)
        return tuple(sorted(points))

    @classmethod
    def from_dict(cls, spec: dict) -> "AlphaSweep":
        if not isinstance(spec, dict):
            raise ValueError("sweep: expected an object")
        extra = set(spec) - {"start", "stop", "step", "extra"}
        if extra:
            raise ValueError(f"sweep.{sorted(extra)[0]}: unexpected key")
        for key in ("start", "stop", "step"):
            if not isinstance(spec.get(key), (int, float)) or isinstance(spec.get(key), bool):
                raise ValueError(f"sweep.{key}: expected a number")
        points = spec.get("extra", [])
        if not isinstance(points, list) or not all(isinstance(a, (int, float)) for a in points):
            raise ValueError("sweep.extra: expected a list of numbers")
        return cls(spec["start"], spec["stop"], spec["step"], tuple(points))

    def to_dict(self) -> dict:
        return {"start": self.start, "stop": self.stop, "step": self.step, "extra": list(self.extra)}


@dataclass(frozen=True)
class ExperimentConfig:
    instance: BanditInstance
    policies: tuple[PolicySpec, ...]
    horizon: int
    n_runs: int
    master_seed: int
    mode: str = "pulled-only"
    sweep: AlphaSweep | None = None
    collision_reward: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        for key in ("horizon", "n_runs", "master_seed"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{key}: expected an integer, got {value!r}")
        if not 1 <= self.horizon < 2**32:
            raise ValueError(f"horizon: must lie in [1, 2**32), got {self.horizon}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs: must be at least 1, got {self.n_runs}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed: must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.mode not in MODES:
            raise ValueError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.collision_reward <= 1.0:
            raise ValueError("collision_reward: must lie in [0, 1]")
        labels = [p.name for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError("policies: labels must be unique")
        for p in self.policies:
            if p.kind == "fixed" and p.arm >= self.instance.n_arms:
                raise ValueError(f"policies: fixed arm {p.arm} out of range")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ValueError("config: expected a JSON object")
        known = {"instance", "policies", "horizon", "n_runs", "master_seed", "mode", "sweep", "collision_reward"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"{sorted(extra)[0]}: unknown config key")
        for key in ("instance", "policies", "horizon", "n_runs", "master_seed"):
            if key not in doc:
                raise ValueError(f"{key}: missing")
        instance = BanditInstance.from_dict(doc["instance"])
        if not isinstance(doc["policies"], list):
            raise ValueError("policies: expected a list")
        policies = []
        for i, p in enumerate(doc["policies"]):
            try:
                policies.append(PolicySpec.from_dict(p))
            except ValueError as exc:
                raise ValueError(f"policies[{i}].{exc}") from None
        sweep = AlphaSweep.from_dict(doc["sweep"]) if doc.get("sweep") is not None else None
        return cls(
            instance=instance,
            policies=tuple(policies),
            horizon=doc["horizon"],
            n_runs=doc["n_runs"],
            master_seed=doc["master_seed"],
            mode=doc.get("mode", "pulled-only"),
            sweep=sweep,
            collision_reward=doc.get("collision_reward", 0.0),
        )

    def to_dict(self) -> dict:
        doc = {
            "instance": self.instance.to_dict(),
            "policies": [p.to_dict() for p in self.policies],
            "horizon": self.horizon,
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
            "mode": self.mode,
        }
        if self.sweep is not None:
            doc["sweep"] = self.sweep.to_dict()
        if self.collision_reward:
            doc["collision_reward"] = self.collision_reward
        return doc


@dataclass
class AggregateCurve:
    """Monte Carlo averages for one policy (one agent, in multi-agent runs).

    Per-round arrays are indexed by ``t - 1``: ``avg_reward`` is the mean of
    cumulative reward / t and ``avg_regret`` the mean of pseudo-regret / t.
    """

    label: str
    policy: PolicySpec
    n_runs: int
    horizon: int
    avg_reward: np.ndarray
    avg_reward_se: np.ndarray
    avg_regret: np.ndarray
    avg_regret_se: np.ndarray
    pull_share: np.ndarray
    modal_arm_runs: np.ndarray
    realized_regret: float | None = None
    realized_regret_se: float | None = None
    collision_rate: float | None = None

    @property
    def final_reward(self) -> float:
        return float(self.avg_reward[-1])

    @property
    def final_reward_se(self) -> float:
        return float(self.avg_reward_se[-1])

    @property
    def final_regret(self) -> float:
        return float(self.avg_regret[-1])

    @property
    def final_regret_se(self) -> float:
        return float(self.avg_regret_se[-1])


@dataclass
class _Moments:
    """Count, mean and centred second moment; merged with Chan's formula."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray, axis: int) -> "_Moments":
        n = x.shape[axis]
        mean = x.sum(axis=axis) / n
        dev = x - np.expand_dims(mean, axis)
        return cls(n, mean, (dev * dev).sum(axis=axis))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    def se(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass
class _BlockStats:
    reward: _Moments
    regret: _Moments
    pulls: np.ndarray
    modal: np.ndarray
    realized: _Moments | None
    collisions: int

    def merge(self, other: "_BlockStats") -> "_BlockStats":
        return _BlockStats(
            self.reward.merge(other.reward),
            self.regret.merge(other.regret),
            self.pulls + other.pulls,
            self.modal + other.modal,
            self.realized.merge(other.realized) if self.realized is not None else None,
            self.collisions + other.collisions,
        )


def _group_policies(instance, members, n_agents, n):
    """Batched policies for one group: ``members`` are tuples of per-agent specs."""
    k = instance.n_arms
    m = len(members)
    if n_agents == 1 and members[0][0].kind in ("ucb", "greedy"):
        alphas = np.repeat([spec[0].exploration for spec in members], n)
        return [UCB(k, alphas, m * n)]
    assert m == 1
    return [make_policy(spec, k, n, agent) for agent, spec in enumerate(members[0])]


def _run_block(task) -> list[list[_BlockStats]]:
    """Simulate one block of runs for one policy group; stats per [member][agent]."""
    instance, members, first, last, horizon, seed, mode, collision_reward = task
    n = last - first
    m = len(members)
    n_agents = len(members[0])
    policies = _group_policies(instance, members, n_agents, n)
    stream = RandomStream(seed, np.tile(np.arange(first, last, dtype=np.uint64), m))
    sim = Simulation(instance, policies, stream, mode=mode, collision_reward=collision_reward)

    shape = (n_agents, m, horizon)
    reward_mean, reward_m2 = np.empty(shape), np.empty(shape)
    regret_mean, regret_m2 = np.empty(shape), np.empty(shape)
    collisions = np.zeros((n_agents, m), dtype=np.int64)
    for chunk in sim.chunks(horizon, CHUNK_ROUNDS):
        cols = slice(chunk.start - 1, chunk.start - 1 + chunk.arms.shape[2])
        t = np.arange(chunk.start, chunk.start + chunk.arms.shape[2], dtype=np.float64)
        for curve, mean_out, m2_out in (
            (chunk.reward_curve, reward_mean, reward_m2),
            (chunk.regret_curve, regret_mean, regret_m2),
        ):
            stats = _Moments.of((curve / t).reshape(n_agents, m, n, -1), axis=2)
            mean_out[:, :, cols] = stats.mean
            m2_out[:, :, cols] = stats.m2
        if chunk.collided is not None:
            collisions += chunk.collided.reshape(n_agents, m, n, -1).sum(axis=(2, 3))

    k = instance.n_arms
    pulls = sim.pulls.reshape(n_agents, m, n, k)
    modal = np.argmax(pulls, axis=3)
    realized = sim.realized_regret().reshape(n_agents, m, n) if mode == "full-table" else None
    out = []
    for j in range(m):
        per_agent = []
        for a in range(n_agents):
            per_agent.append(
                _BlockStats(
                    _Moments(n, reward_mean[a, j], reward_m2[a, j]),
                    _Moments(n, regret_mean[a, j], regret_m2[a, j]),
                    pulls[a, j].sum(axis=0),
                    np.bincount(modal[a, j], minlength=k),
                    _Moments.of(realized[a, j], axis=0) if realized is not None else None,
                    int(collisions[a, j]),
                )
            )
        out.append(per_agent)
    return out


def _blocks(n_runs: int):
    return [(s, min(s + BLOCK_SIZE, n_runs)) for s in range(0, n_runs, BLOCK_SIZE)]


def _simulate(config: ExperimentConfig, groups, workers: int):
    """Run every group over every block; returns merged stats per group/member/agent."""
    tasks = [
        (config.instance, members, first, last, config.horizon, config.master_seed, config.mode,
         config.collision_reward)
        for members in groups
        for first, last in _blocks(config.n_runs)
    ]
    log.info("simulating %d block task(s) of up to %d runs, horizon %d", len(tasks), BLOCK_SIZE, config.horizon)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_block(task))
            log.info("block %d/%d done", i + 1, len(tasks))
    n_blocks = len(_blocks(config.n_runs))
    merged = []
    for g in range(len(groups)):
        acc = results[g * n_blocks]
        for block in results[g * n_blocks + 1:(g + 1) * n_blocks]:
            acc = [[x.merge(y) for x, y in zip(xs, ys)] for xs, ys in zip(acc, block)]
        merged.append(acc)
    return merged


def _curve(label, spec, stats: _BlockStats, config: ExperimentConfig) -> AggregateCurve:
    total_pulls = stats.pulls.sum()
    return AggregateCurve(
        label=label,
        policy=spec,
        n_runs=config.n_runs,
        horizon=config.horizon,
        avg_reward=stats.reward.mean,
        avg_reward_se=stats.reward.se(),
        avg_regret=stats.regret.mean,
        avg_regret_se=stats.regret.se(),
        pull_share=stats.pulls / total_pulls,
        modal_arm_runs=stats.modal,
        realized_regret=float(stats.realized.mean) if stats.realized is not None else None,
        realized_regret_se=float(stats.realized.se()) if stats.realized is not None else None,
    )


def monte_carlo(config: ExperimentConfig, workers: int = 1) -> list[AggregateCurve]:
    """Average ``config.n_runs`` independent episodes for each policy in ``config.policies``."""
    if not config.policies:
        return []
    ucb_family = [i for i, p in enumerate(config.policies) if p.kind in ("ucb", "greedy")]
    groups_idx = ([ucb_family] if ucb_family else []) + [
        [i] for i, p in enumerate(config.policies) if p.kind not in ("ucb", "greedy")
    ]
    groups = [[(config.policies[i],) for i in idx] for idx in groups_idx]
    merged = _simulate(config, groups, workers)
    curves: list[AggregateCurve | None] = [None] * len(config.policies)
    for idx, group in zip(groups_idx, merged):
        for i, per_agent in zip(idx, group):
            spec = config.policies[i]
            curves[i] = _curve(spec.name, spec, per_agent[0], config)
    return curves


def two_agent_monte_carlo(config: ExperimentConfig, workers: int = 1) -> list[AggregateCurve]:
    """Monte Carlo over the collision environment; ``config.policies`` holds one spec per agent.

    Returns one curve per agent labelled ``agent<i>-<policy>``; each carries the
    fraction of rounds in which that agent collided.
    """
    if len(config.policies) < 2:
        raise ValueError("policies: the collision environment needs one spec per agent (at least 2)")
    merged = _simulate(config, [[tuple(config.policies)]], workers)[0][0]
    curves = []
    for a, (spec, stats) in enumerate(zip(config.policies, merged)):
        curve = _curve(f"agent{a}-{spec.name}", spec, stats, config)
        curve.collision_rate = stats.collisions / (config.n_runs * config.horizon)
        curves.append(curve)
    return curves


@dataclass
class SweepResult:
    alphas: tuple[float, ...]
    curves: list[AggregateCurve]

    @property
    def rows(self) -> list[tuple[float, float, float, float, float]]:
        """``(alpha, final avg reward, se, final avg regret, se)`` sorted by alpha."""
        return [
            (a, c.final_reward, c.final_reward_se, c.final_regret, c.final_regret_se)
            for a, c in zip(self.alphas, self.curves)
        ]

    @property
    def best_index(self) -> int:
        rewards = [c.final_reward for c in self.curves]
        return int(np.argmax(rewards))

    @property
    def best_alpha(self) -> float:
        return self.alphas[self.best_index]

    @property
    def best_curve(self) -> AggregateCurve:
        return self.curves[self.best_index]

    def curve_for(self, alpha: float) -> AggregateCurve:
        return self.curves[self.alphas.index(alpha)]


def alpha_sweep(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Run UCB at every grid alpha with common random numbers; flags the best final reward."""
    if config.sweep is None:
        raise ValueError("sweep: missing from config")
    grid = config.sweep.grid()
    if not grid:
        raise ValueError("sweep: empty alpha grid")
    specs = tuple(ucb(a) for a in grid)
    curves = monte_carlo(replace(config, policies=specs), workers)
    return SweepResult(grid, curves)


SIM1_ARMS = (
    rw.Bernoulli(0.5),
    rw.Beta(4.0, 12.0),
    rw.Exponential(9.0),
    rw.FiniteDiscrete((0.25, 0.5, 0.75, 1.0), (0.3, 0.3, 0.3, 0.1)),
)
SIM2_ARMS = (rw.Bernoulli(0.20), rw.Bernoulli(0.23), rw.Bernoulli(0.25), rw.Bernoulli(0.21))

SIM1_SWEEP = AlphaSweep(0.14, 0.98, 0.14, extra=(0.0, 0.0464))
SIM2_SWEEP = AlphaSweep(0.14, 0.98, 0.14, extra=(0.0464,))

SIM1_DEFAULTS = {"n_runs": 10_000, "horizon": 10_000}
SIM2_DEFAULTS = {"n_runs": 10_000, "horizon": 100_000}


def sim1_instance() -> BanditInstance:
    return BanditInstance(SIM1_ARMS)


def sim2_instance() -> BanditInstance:
    return BanditInstance(SIM2_ARMS)


@dataclass
class Sim1Result:
    config: ExperimentConfig
    sweep: SweepResult

    @property
    def benchmark(self) -> AggregateCurve:
        """The alpha = 0 (greedy) row."""
        return self.sweep.curve_for(0.0)

    @property
    def curves(self) -> list[AggregateCurve]:
        return self.sweep.curves


@dataclass
class Sim2Result:
    config: ExperimentConfig
    sweep: SweepResult
    ucb: AggregateCurve
    ts: AggregateCurve

    @property
    def curves(self) -> list[AggregateCurve]:
        return [self.ucb, self.ts]


def replicate_sim1(master_seed: int, n_runs: int = SIM1_DEFAULTS["n_runs"],
                   horizon: int = SIM1_DEFAULTS["horizon"], workers: int = 1) -> Sim1Result:
    """Four heterogeneous arms, UCB over the alpha grid including the alpha = 0 benchmark."""
    config = ExperimentConfig(
        instance=sim1_instance(),
        policies=(),
        horizon=horizon,
        n_runs=n_runs,
        master_seed=master_seed,
        sweep=SIM1_SWEEP,
    )
    sweep = alpha_sweep(config, workers)
    config = replace(config, policies=tuple(c.policy for c in sweep.curves))
    return Sim1Result(config, sweep)


def replicate_sim2(master_seed: int, n_runs: int = SIM2_DEFAULTS["n_runs"],
                   horizon: int = SIM2_DEFAULTS["horizon"], workers: int = 1) -> Sim2Result:
    """Four Bernoulli channels: UCB at the swept best alpha against Thompson sampling.

    The UCB curve is the best sweep row itself (same seeds), relabelled ``ucb``.
    """
    config = ExperimentConfig(
        instance=sim2_instance(),
        policies=(),
        horizon=horizon,
        n_runs=n_runs,
        master_seed=master_seed,
        sweep=SIM2_SWEEP,
    )
    sweep = alpha_sweep(config, workers)
    best = sweep.best_curve
    ucb_spec = ucb(sweep.best_alpha, label="ucb")
    ts_spec = PolicySpec("ts")
    (ts_curve,) = monte_carlo(replace(config, policies=(ts_spec,)), workers)
    ucb_curve = replace(best, label="ucb", policy=ucb_spec)
    return Sim2Result(replace(config, policies=(ucb_spec, ts_spec)), sweep, ucb_curve, ts_curve)

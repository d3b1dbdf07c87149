"""Bandit game core: instances, the stochastic-game tuple, play loop and regret.

The play loop (:class:`Simulation`) advances a batch of independent episodes in
lockstep, one row per episode, with one policy object per agent. A single
episode is a batch of one, so :func:`run_episode` and the Monte Carlo harness
execute the same code.

Reward randomness uses one lane per (agent, arm). In the default
``"pulled-only"`` mode the n-th pull of an arm reads slot ``n`` of that arm's
lane, so two policies compared on the same stream index see the same reward
sequence per arm (common random numbers). ``"full-table"`` mode draws every
arm every round from slot ``t - 1``, which is what realized regret needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from . import rewards as rw
from .policies import PolicySpec, make_policy
from .rng import REWARD, RandomStream, beta_at, lane_id, uniform_at

__all__ = [
    "BanditInstance",
    "TransitionKernel",
    "StochasticGameSpec",
    "StepRecord",
    "RunResult",
    "CollisionEnvironment",
    "Simulation",
    "MODES",
    "run_episode",
    "run_two_agent_episode",
    "discounted_return",
    "pseudo_regret",
    "realized_regret",
    "kernel_step",
    "bandit_game",
]

MODES = ("pulled-only", "full-table")
PROB_SUM_TOL = 1e-12


class BanditInstance:
    """An ordered set of arms with their (clamped) means."""

    def __init__(self, arms: Sequence[rw.RewardDistribution]):
        arms = tuple(arms)
        if not arms:
            raise ValueError("arms: need at least one arm")
        for i, dist in enumerate(arms):
            problem = rw.validate(dist)
            if problem:
                raise ValueError(f"arms[{i}].{problem}")
        self.arms = arms
        self.means = np.array([rw.clamped_mean(d) for d in arms])
        self.optimal_arm = int(np.argmax(self.means))
        self.optimal_mean = float(self.means[self.optimal_arm])
        self.gaps = self.optimal_mean - self.means
        self._all_bernoulli = all(isinstance(d, rw.Bernoulli) for d in arms)
        self._p = np.array([d.p for d in arms]) if self._all_bernoulli else None

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def __eq__(self, other) -> bool:
        return isinstance(other, BanditInstance) and self.arms == other.arms

    def __repr__(self) -> str:
        return f"BanditInstance({list(self.arms)!r})"

    @classmethod
    def from_dict(cls, spec: Mapping) -> "BanditInstance":
        if not isinstance(spec, Mapping) or "arms" not in spec:
            raise ValueError("instance.arms: missing")
        if not isinstance(spec["arms"], list):
            raise ValueError("instance.arms: expected a list")
        arms = []
        for i, d in enumerate(spec["arms"]):
            try:
                arms.append(rw.from_dict(d))
            except ValueError as exc:
                raise ValueError(f"instance.arms[{i}].{exc}") from None
        return cls(arms)

    def to_dict(self) -> dict:
        return {"arms": [rw.to_dict(d) for d in self.arms]}

    def draw(self, seed: int, index, lanes, arms, slots) -> np.ndarray:
        """Rewards for rows pulling ``arms`` at ``slots`` on per-row ``lanes``."""
        u = uniform_at(seed, index, lanes, slots)
        if self._all_bernoulli:
            return (u < self._p[arms]).astype(np.float64)
        out = np.empty(np.shape(u))
        for k, dist in enumerate(self.arms):
            mask = arms == k
            if not mask.any():
                continue
            if dist.from_uniform is not None:
                out[mask] = dist.from_uniform(u[mask])
            else:
                idx = np.broadcast_to(index, mask.shape)[mask]
                lane = np.broadcast_to(lanes, mask.shape)[mask]
                slot = np.broadcast_to(slots, mask.shape)[mask]
                out[mask] = np.clip(beta_at(seed, idx, lane, slot, dist.a, dist.b), 0.0, 1.0)
        return out


@dataclass(frozen=True)
class TransitionKernel:
    """Categorical next-state law ``P(. | x, a, xi)`` on a finite state list."""

    states: tuple
    rows: Mapping[tuple, tuple]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        rows = {}
        for key, probs in self.rows.items():
            probs = tuple(float(p) for p in probs)
            if len(probs) != len(self.states):
                raise ValueError(f"transition{key!r}: expected {len(self.states)} probabilities")
            if any(not math.isfinite(p) or p < 0 for p in probs):
                raise ValueError(f"transition{key!r}: negative probability")
            if abs(math.fsum(probs) - 1.0) > PROB_SUM_TOL:
                raise ValueError(f"transition{key!r}: probabilities sum to {math.fsum(probs)!r}")
            rows[key] = probs
        object.__setattr__(self, "rows", rows)

    def probabilities(self, x, a, xi) -> tuple:
        try:
            return self.rows[(x, a, xi)]
        except KeyError:
            raise ValueError(f"({x!r}, {a!r}, {xi!r}) is not in the kernel domain") from None


@dataclass(frozen=True)
class StochasticGameSpec:
    """The game tuple: players, states, feasible actions, kernel, payoff and discount."""

    n_players: int
    states: tuple
    actions: Mapping[Hashable, tuple]
    transition: TransitionKernel
    payoff: Callable[[Any, Any, Any], float]
    discount: float = 1.0

    def __post_init__(self):
        if self.n_players < 1:
            raise ValueError("n_players must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount!r}")
        for x in self.states:
            if not self.actions.get(x):
                raise ValueError(f"state {x!r} has no feasible action")
        if tuple(self.transition.states) != tuple(self.states):
            raise ValueError("transition kernel must be defined on the game's state list")


def kernel_step(spec: StochasticGameSpec, x, a, xi, stream: RandomStream):
    """Sample the next state of a player given its state, action and the others' states."""
    if a not in spec.actions.get(x, ()):
        raise ValueError(f"action {a!r} is not feasible in state {x!r}")
    probs = spec.transition.probabilities(x, a, xi)
    u = stream.uniform()
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return spec.states[min(k, len(spec.states) - 1)]


def bandit_game(instance: BanditInstance) -> StochasticGameSpec:
    """The single-player, single-state game whose actions are the arms."""
    actions = tuple(range(instance.n_arms))
    kernel = TransitionKernel((0,), {(0, a, ()): (1.0,) for a in actions})
    means = tuple(float(m) for m in instance.means)
    return StochasticGameSpec(1, (0,), {0: actions}, kernel, lambda x, a, xi: means[a], 1.0)


@dataclass(frozen=True)
class StepRecord:
    t: int
    arm: int
    reward: float


@dataclass
class RunResult:
    """Trajectory of one episode for one agent.

    ``reward_table`` (rounds x arms) is present only in full-table mode and
    ``collisions`` only for multi-agent episodes.
    """

    arms: np.ndarray
    rewards: np.ndarray
    means: np.ndarray
    optimal_mean: float
    reward_table: np.ndarray | None = None
    collisions: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return int(self.arms.size)

    @property
    def steps(self) -> list[StepRecord]:
        return [StepRecord(t + 1, int(a), float(r)) for t, (a, r) in enumerate(zip(self.arms, self.rewards))]

    @property
    def reward_curve(self) -> np.ndarray:
        return np.cumsum(self.rewards)

    @property
    def cumulative_reward(self) -> float:
        return float(self.reward_curve[-1])

    @property
    def pseudo_regret_curve(self) -> np.ndarray:
        return np.cumsum(self.optimal_mean - self.means[self.arms])

    @property
    def pull_counts(self) -> np.ndarray:
        return np.bincount(self.arms, minlength=self.means.size)

    @property
    def realized_regret(self) -> float | None:
        if self.reward_table is None:
            return None
        return realized_regret(self.steps, self.reward_table)


@dataclass(frozen=True)
class CollisionEnvironment:
    """Channels shared by agents that pick independently each round.

    Agents landing on the same channel all receive ``collision_reward``.
    """

    channels: BanditInstance
    n_agents: int = 2
    collision_reward: float = 0.0

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("n_agents must be at least 2")
        if self.n_agents > 16:
            raise ValueError("at most 16 agents are supported")
        if not 0.0 <= self.collision_reward <= 1.0:
            raise ValueError("collision_reward must lie in [0, 1]")


class Chunk(NamedTuple):
    """A block of consecutive rounds from :meth:`Simulation.chunks`.

    Arrays are indexed ``[agent, row, round]``; ``start`` is the 1-based round
    of the first column. ``reward_curve`` and ``regret_curve`` are running
    totals since round 1.
    """

    start: int
    arms: np.ndarray
    rewards: np.ndarray
    reward_curve: np.ndarray
    regret_curve: np.ndarray
    collided: np.ndarray | None


class Simulation:
    """Lockstep play of ``n_envs`` independent episodes.

    ``policies`` holds one batched policy per agent. ``stream`` supplies the
    seed and one stream index per row.
    """

    def __init__(
        self,
        instance: BanditInstance,
        policies: Sequence,
        stream: RandomStream,
        *,
        mode: str = "pulled-only",
        collision_reward: float = 0.0,
        record_table: bool = False,
    ):
        if mode not in MODES:
            raise ValueError(f"mode: expected one of {MODES}, got {mode!r}")
        self.instance = instance
        self.policies = list(policies)
        self.n_agents = len(self.policies)
        self.n_envs = self.policies[0].n_envs
        if any(p.n_envs != self.n_envs or p.n_arms != instance.n_arms for p in self.policies):
            raise ValueError("policies disagree on batch size or arm count")
        index = np.broadcast_to(np.asarray(stream.index, dtype=np.uint64), (self.n_envs,))
        self.stream = RandomStream(stream.seed, np.array(index))
        self.mode = mode
        self.collision_reward = float(collision_reward)
        self.record_table = record_table
        self.t = 0
        k = instance.n_arms
        self.pulls = np.zeros((self.n_agents, self.n_envs, k), dtype=np.int64)
        self.collected = np.zeros((self.n_agents, self.n_envs))
        self.regret = np.zeros((self.n_agents, self.n_envs))
        self.table_sums = np.zeros((self.n_agents, self.n_envs, k)) if mode == "full-table" else None
        self.tables: list[list[np.ndarray]] = [[] for _ in range(self.n_agents)]
        self._lanes = np.array(
            [[lane_id(REWARD, a, arm) for arm in range(k)] for a in range(self.n_agents)], dtype=np.uint64
        )
        self._rows = np.arange(self.n_envs)

    def _collisions(self, arms: list[np.ndarray]) -> list[np.ndarray] | None:
        if self.n_agents == 1:
            return None
        out = []
        for a, mine in enumerate(arms):
            hit = np.zeros(self.n_envs, dtype=bool)
            for b, other in enumerate(arms):
                if b != a:
                    hit |= mine == other
            out.append(hit)
        return out

    def _rewards(self, agent: int, arms: np.ndarray) -> np.ndarray:
        inst, s = self.instance, self.stream
        if self.mode == "pulled-only":
            slots = self.pulls[agent, self._rows, arms]
            return inst.draw(s.seed, s.index, self._lanes[agent][arms], arms, slots)
        k = inst.n_arms
        table = inst.draw(
            s.seed,
            s.index[:, None],
            self._lanes[agent][None, :],
            np.broadcast_to(np.arange(k), (self.n_envs, k)),
            np.uint64(self.t - 1),
        )
        self.table_sums[agent] += table
        if self.record_table:
            self.tables[agent].append(table)
        return table[self._rows, arms]

    def step(self):
        """Play one round; returns per-agent arms, rewards and collision flags."""
        self.t += 1
        arms = [p.select(self.stream) for p in self.policies]
        collided = self._collisions(arms)
        rewards = []
        for a in range(self.n_agents):
            r = self._rewards(a, arms[a])
            if collided is not None:
                r = np.where(collided[a], self.collision_reward, r)
            rewards.append(r)
        for a, policy in enumerate(self.policies):
            policy.update(arms[a], rewards[a], self.stream)
            self.pulls[a, self._rows, arms[a]] += 1
            self.collected[a] += rewards[a]
            self.regret[a] += self.instance.gaps[arms[a]]
        return arms, rewards, collided

    def chunks(self, horizon: int, size: int = 1024) -> Iterator[Chunk]:
        """Play rounds ``t+1 .. horizon`` and yield them in blocks of ``size`` rounds."""
        if horizon < 1 or horizon >= 2**32:
            raise ValueError("horizon must lie in [1, 2**32)")
        shape = (self.n_agents, self.n_envs)
        while self.t < horizon:
            start = self.t + 1
            width = min(size, horizon - self.t)
            # round-major buffers keep the per-step writes contiguous
            arms = np.empty((width,) + shape, dtype=np.int64)
            rewards = np.empty((width,) + shape)
            reward_curve = np.empty((width,) + shape)
            regret_curve = np.empty((width,) + shape)
            collided = np.empty((width,) + shape, dtype=bool) if self.n_agents > 1 else None
            for j in range(width):
                a, r, c = self.step()
                for g in range(self.n_agents):
                    arms[j, g] = a[g]
                    rewards[j, g] = r[g]
                    if c is not None:
                        collided[j, g] = c[g]
                reward_curve[j] = self.collected
                regret_curve[j] = self.regret
            yield Chunk(
                start,
                np.moveaxis(arms, 0, -1),
                np.moveaxis(rewards, 0, -1),
                np.moveaxis(reward_curve, 0, -1),
                np.moveaxis(regret_curve, 0, -1),
                None if collided is None else np.moveaxis(collided, 0, -1),
            )

    def realized_regret(self) -> np.ndarray:
        """Per agent and row: best arm's realized total minus collected reward (full-table mode)."""
        if self.table_sums is None:
            raise ValueError("realized regret needs full-table mode")
        return self.table_sums.max(axis=2) - self.collected


def _spec(policy) -> PolicySpec:
    if isinstance(policy, PolicySpec):
        return policy
    if isinstance(policy, Mapping):
        return PolicySpec.from_dict(dict(policy))
    raise TypeError(f"expected a PolicySpec or policy dict, got {policy!r}")


def _play(instance, specs, horizon, stream, mode, collision_reward=0.0) -> list[RunResult]:
    if np.ndim(stream.index) != 0:
        raise ValueError("run a single episode on a scalar stream index")
    policies = [make_policy(_spec(p), instance.n_arms, 1, agent) for agent, p in enumerate(specs)]
    sim = Simulation(
        instance, policies, stream, mode=mode, collision_reward=collision_reward, record_table=True
    )
    parts = list(sim.chunks(horizon))
    results = []
    for a in range(len(specs)):
        table = np.concatenate(sim.tables[a]) if mode == "full-table" else None
        collisions = np.concatenate([c.collided[a, 0] for c in parts]) if len(specs) > 1 else None
        results.append(
            RunResult(
                arms=np.concatenate([c.arms[a, 0] for c in parts]),
                rewards=np.concatenate([c.rewards[a, 0] for c in parts]),
                means=instance.means,
                optimal_mean=instance.optimal_mean,
                reward_table=table,
                collisions=collisions,
            )
        )
    return results


def run_episode(
    instance: BanditInstance,
    policy,
    horizon: int,
    stream: RandomStream,
    mode: str = "pulled-only",
) -> RunResult:
    """Play one episode of ``horizon`` rounds: select, draw the reward, update."""
    return _play(instance, [policy], horizon, stream, mode)[0]


def run_two_agent_episode(
    env: CollisionEnvironment,
    policies: Sequence,
    horizon: int,
    stream: RandomStream,
    mode: str = "pulled-only",
) -> tuple[RunResult, ...]:
    """Agents choose channels independently; same-channel choices all get ``env.collision_reward``.

    Pseudo-regret in the results is measured against the single-agent best
    channel and ignores collisions.
    """
    if len(policies) != env.n_agents:
        raise ValueError(f"need {env.n_agents} policy specs, got {len(policies)}")
    return tuple(_play(env.channels, policies, horizon, stream, mode, env.collision_reward))


def discounted_return(rewards: Sequence[float], discount: float) -> float:
    """``sum_j discount**(T - j) * rewards[j]``, evaluated by Horner's rule."""
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount must lie in [0, 1], got {discount!r}")
    if len(rewards) == 0:
        raise ValueError("rewards must be nonempty")
    total = 0.0
    for r in rewards:
        total = total * discount + float(r)
    return total


def _arms_of(steps) -> np.ndarray:
    return np.fromiter((s.arm for s in steps), dtype=np.int64)


def pseudo_regret(instance: BanditInstance, steps: Sequence[StepRecord]) -> float:
    """``T * u_best - sum_t u_{arm_t}``, accumulated as a sum of per-round gaps."""
    arms = _arms_of(steps)
    if arms.size and (arms.min() < 0 or arms.max() >= instance.n_arms):
        raise IndexError("step arm out of range")
    return float(np.cumsum(instance.gaps[arms])[-1]) if arms.size else 0.0


def realized_regret(steps: Sequence[StepRecord], all_rewards) -> float:
    """Best single arm's realized total minus the collected total.

    ``all_rewards`` holds one row per round and one column per arm.
    """
    table = np.asarray(all_rewards, dtype=np.float64)
    arms = _arms_of(steps)
    if table.ndim != 2 or table.shape[0] != arms.size:
        raise ValueError(f"reward table shape {table.shape} does not match {arms.size} steps")
    if arms.size and (arms.min() < 0 or arms.max() >= table.shape[1]):
        raise ValueError("step arm outside the reward table")
    collected = math.fsum(table[np.arange(arms.size), arms])
    best = max(math.fsum(col) for col in table.T)
    return best - collected

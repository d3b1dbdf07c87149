"""Arm-selection policies: UCB with exploration weight alpha, and Thompson sampling.

Policies hold state for a batch of independent environments (rows). A single
episode is simply a batch of one. Every policy exposes the same two calls::

    arms = policy.select(stream)
    policy.update(arms, rewards, stream)

where ``stream`` is a :class:`~mabspectrum.rng.RandomStream` whose index has
one entry per row. Deterministic policies ignore it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import COIN, POLICY, RandomStream, beta_at, lane_id

__all__ = [
    "PolicySpec",
    "UCB",
    "Thompson",
    "FixedArm",
    "make_policy",
]


def _check_rewards(rewards) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    if np.any(~((rewards >= 0.0) & (rewards <= 1.0))):
        raise ValueError("rewards must lie in [0, 1]")
    return rewards


def _rows_arms(arms, n_envs: int, n_arms: int) -> np.ndarray:
    arms = np.broadcast_to(np.asarray(arms, dtype=np.int64), (n_envs,))
    if np.any((arms < 0) | (arms >= n_arms)):
        raise IndexError(f"arm out of range [0, {n_arms})")
    return arms


class UCB:
    """Upper confidence bound with index ``mean + sqrt(alpha * ln t / (2 N))``.

    ``t`` is the number of pulls made so far (``ln`` is taken of ``max(t, 1)``)
    and ``N`` the arm's pull count. Unpulled arms get an infinite index, so the
    first ``n_arms`` rounds pull each arm once in index order. Ties go to the
    lowest arm. With ``alpha = 0`` the policy is the greedy benchmark that
    plays the best sample mean.

    ``alpha`` may be a scalar or one value per row, which is how a whole alpha
    sweep runs as one batch.
    """

    def __init__(self, n_arms: int, alpha=1.0, n_envs: int = 1, agent: int = 0):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        alpha = np.array(np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n_envs,)))
        if np.any(~((alpha >= 0.0) & (alpha <= 1.0))):
            raise ValueError("alpha must lie in [0, 1]")
        self.n_arms = n_arms
        self.n_envs = n_envs
        self.agent = agent
        self.alpha = alpha
        self.counts = np.zeros((n_envs, n_arms), dtype=np.int64)
        self.reward_sums = np.zeros((n_envs, n_arms))
        self.t = np.zeros(n_envs, dtype=np.int64)
        self._rows = np.arange(n_envs)

    @classmethod
    def from_state(cls, alpha, counts, reward_sums, t=None) -> "UCB":
        """Single-environment policy with the given pull counts and reward sums."""
        counts = np.asarray(counts, dtype=np.int64)
        reward_sums = np.asarray(reward_sums, dtype=np.float64)
        if counts.shape != reward_sums.shape or counts.ndim != 1:
            raise ValueError("counts and reward_sums must be equal-length vectors")
        if np.any(counts < 0) or np.any(reward_sums < 0) or np.any(reward_sums > counts):
            raise ValueError("need counts >= 0 and 0 <= reward_sums <= counts")
        policy = cls(counts.size, alpha)
        policy.counts[0] = counts
        policy.reward_sums[0] = reward_sums
        policy.t[0] = counts.sum() if t is None else t
        return policy

    def means(self) -> np.ndarray:
        """Sample means, NaN for unpulled arms."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.reward_sums / self.counts, np.nan)

    def index(self, arm: int | None = None):
        n = self.counts
        safe_n = np.maximum(n, 1)
        log_t = np.log(np.maximum(self.t, 1))[:, None]
        bonus = np.sqrt(self.alpha[:, None] * log_t / (2.0 * safe_n))
        idx = np.where(n > 0, self.reward_sums / safe_n + bonus, np.inf)
        if arm is None:
            return idx
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range [0, {self.n_arms})")
        col = idx[:, arm]
        return float(col[0]) if self.n_envs == 1 else col

    def select(self, stream: RandomStream | None = None) -> np.ndarray:
        return np.argmax(self.index(), axis=1)

    def update(self, arms, rewards, stream: RandomStream | None = None) -> None:
        arms = _rows_arms(arms, self.n_envs, self.n_arms)
        rewards = _check_rewards(rewards)
        self.counts[self._rows, arms] += 1
        self.reward_sums[self._rows, arms] += rewards
        self.t += 1


class Thompson:
    """Beta-Bernoulli Thompson sampling from a Beta(1, 1) prior.

    Each round draws ``theta_i ~ Beta(successes_i + 1, failures_i + 1)`` and
    plays the argmax. A reward ``r`` in [0, 1] counts as a success with
    probability ``r`` (an exact posterior update for 0/1 rewards).

    Posterior draws for arm ``i`` at round ``t`` sit on slot ``t`` of the
    agent's policy lane for that arm; the binarising coin sits on slot ``t``
    of the agent's coin lane.
    """

    def __init__(self, n_arms: int, n_envs: int = 1, agent: int = 0):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        self.n_arms = n_arms
        self.n_envs = n_envs
        self.agent = agent
        self.successes = np.zeros((n_envs, n_arms), dtype=np.int64)
        self.failures = np.zeros((n_envs, n_arms), dtype=np.int64)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self._rows = np.arange(n_envs)
        self._theta_lanes = np.array([lane_id(POLICY, agent, k) for k in range(n_arms)], dtype=np.uint64)
        self._coin_lane = lane_id(COIN, agent)

    @classmethod
    def from_state(cls, successes, failures, t=None, agent: int = 0) -> "Thompson":
        successes = np.asarray(successes, dtype=np.int64)
        failures = np.asarray(failures, dtype=np.int64)
        if successes.shape != failures.shape or successes.ndim != 1:
            raise ValueError("successes and failures must be equal-length vectors")
        if np.any(successes < 0) or np.any(failures < 0):
            raise ValueError("successes and failures must be nonnegative")
        policy = cls(successes.size, agent=agent)
        policy.successes[0] = successes
        policy.failures[0] = failures
        policy.t[0] = successes.sum() + failures.sum() if t is None else t
        return policy

    def sample_theta(self, stream: RandomStream) -> np.ndarray:
        index = np.broadcast_to(np.asarray(stream.index, dtype=np.uint64), (self.n_envs,))
        return beta_at(
            stream.seed,
            index[:, None],
            self._theta_lanes[None, :],
            self.t[:, None],
            self.successes + 1.0,
            self.failures + 1.0,
        )

    def select(self, stream: RandomStream) -> np.ndarray:
        return np.argmax(self.sample_theta(stream), axis=1)

    def update(self, arms, rewards, stream: RandomStream) -> None:
        arms = _rows_arms(arms, self.n_envs, self.n_arms)
        rewards = _check_rewards(rewards)
        coin = stream.uniform_at(self._coin_lane, self.t)
        hit = coin < rewards
        self.successes[self._rows, arms] += hit
        self.failures[self._rows, arms] += ~hit
        self.t += 1


class FixedArm:
    """Always plays one arm. Used to pin agents to channels."""

    def __init__(self, n_arms: int, arm: int, n_envs: int = 1, agent: int = 0):
        if not 0 <= arm < n_arms:
            raise ValueError(f"arm: {arm} out of range [0, {n_arms})")
        self.n_arms = n_arms
        self.n_envs = n_envs
        self.arm = arm
        self.counts = np.zeros((n_envs, n_arms), dtype=np.int64)
        self._rows = np.arange(n_envs)

    def select(self, stream: RandomStream | None = None) -> np.ndarray:
        return np.full(self.n_envs, self.arm, dtype=np.int64)

    def update(self, arms, rewards, stream: RandomStream | None = None) -> None:
        arms = _rows_arms(arms, self.n_envs, self.n_arms)
        _check_rewards(rewards)
        self.counts[self._rows, arms] += 1


@dataclass(frozen=True)
class PolicySpec:
    """Config-level description of a policy.

    ``kind`` is ``"ucb"`` (needs ``alpha``), ``"greedy"`` (UCB with alpha 0),
    ``"ts"``, or ``"fixed"`` (needs ``arm``). ``label`` names the output file.
    """

    kind: str
    alpha: float | None = None
    arm: int | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind == "ucb":
            if self.alpha is None:
                raise ValueError("alpha: required for ucb policy")
            if isinstance(self.alpha, bool) or not isinstance(self.alpha, (int, float)) or not 0 <= self.alpha <= 1:
                raise ValueError(f"alpha: must lie in [0, 1], got {self.alpha!r}")
        elif self.kind == "fixed":
            if isinstance(self.arm, bool) or not isinstance(self.arm, int) or self.arm < 0:
                raise ValueError(f"arm: fixed policy needs a nonnegative integer arm, got {self.arm!r}")
        elif self.kind not in ("greedy", "ts"):
            raise ValueError(f"kind: unknown policy kind {self.kind!r}")
        if self.kind != "ucb" and self.alpha is not None:
            raise ValueError(f"alpha: not a parameter of {self.kind} policy")
        if self.kind != "fixed" and self.arm is not None:
            raise ValueError(f"arm: not a parameter of {self.kind} policy")

    @property
    def exploration(self) -> float | None:
        """UCB alpha (0 for greedy), ``None`` for other kinds."""
        if self.kind == "greedy":
            return 0.0
        return float(self.alpha) if self.kind == "ucb" else None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "ucb":
            return f"ucb-alpha-{self.alpha:g}"
        if self.kind == "fixed":
            return f"fixed-arm-{self.arm}"
        return self.kind

    @classmethod
    def from_dict(cls, spec: dict) -> "PolicySpec":
        if not isinstance(spec, dict):
            raise ValueError(f"policy spec must be an object, got {spec!r}")
        extra = set(spec) - {"kind", "alpha", "arm", "label"}
        if extra:
            raise ValueError(f"{sorted(extra)[0]}: unexpected key in policy spec")
        if "kind" not in spec:
            raise ValueError("kind: missing in policy spec")
        return cls(spec["kind"], spec.get("alpha"), spec.get("arm"), spec.get("label"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("alpha", "arm", "label"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


def ucb(alpha: float, label: str | None = None) -> PolicySpec:
    return PolicySpec("ucb", alpha=alpha, label=label)


def make_policy(spec: PolicySpec, n_arms: int, n_envs: int = 1, agent: int = 0):
    if spec.kind in ("ucb", "greedy"):
        return UCB(n_arms, spec.exploration, n_envs, agent)
    if spec.kind == "ts":
        return Thompson(n_arms, n_envs, agent)
    return FixedArm(n_arms, spec.arm, n_envs, agent)

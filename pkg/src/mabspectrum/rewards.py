"""Arm reward laws: Bernoulli, Beta, Exponential and finite discrete.

All samples are clamped to [0, 1] at the sampler, so every consumer (policies,
regret accounting, the CSV output) sees the same bounded rewards. The only law
the clamp actually changes is the exponential, whose clamped mean is
``(1 - exp(-rate)) / rate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import rng as _rng
from .rng import RandomStream

__all__ = [
    "Bernoulli",
    "Beta",
    "Exponential",
    "FiniteDiscrete",
    "RewardDistribution",
    "analytic_mean",
    "clamped_mean",
    "validate",
    "sample",
    "sample_at",
    "from_dict",
    "to_dict",
]

PROB_SUM_TOL = 1e-12


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class Bernoulli:
    p: float
    kind = "bernoulli"

    def mean(self) -> float:
        return float(self.p)

    def violation(self) -> str | None:
        if not _finite(self.p) or not 0.0 <= self.p <= 1.0:
            return f"p: probability must lie in [0, 1], got {self.p!r}"
        return None

    def from_uniform(self, u):
        return (u < self.p).astype(np.float64)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float
    kind = "beta"

    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def violation(self) -> str | None:
        for name in ("a", "b"):
            value = getattr(self, name)
            if not _finite(value) or value <= 0:
                return f"{name}: nonpositive or non-finite shape {value!r}"
        return None

    from_uniform = None


@dataclass(frozen=True)
class Exponential:
    """Exponential law parameterised by its rate (mean ``1 / rate``)."""

    rate: float
    kind = "exponential"

    def mean(self) -> float:
        return 1.0 / self.rate

    def clamped_mean(self) -> float:
        return -math.expm1(-self.rate) / self.rate

    def violation(self) -> str | None:
        if not _finite(self.rate) or self.rate <= 0:
            return f"rate: must be positive and finite, got {self.rate!r}"
        return None

    def from_uniform(self, u):
        return np.minimum(-np.log(u) / self.rate, 1.0)


@dataclass(frozen=True)
class FiniteDiscrete:
    values: tuple[float, ...]
    probs: tuple[float, ...]
    kind = "finite"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "probs", tuple(self.probs))

    def mean(self) -> float:
        # exact rational dot product, rounded once
        return float(sum(Fraction(v) * Fraction(p) for v, p in zip(self.values, self.probs)))

    def violation(self) -> str | None:
        if len(self.values) == 0 or len(self.values) != len(self.probs):
            return (
                f"values/probs: need equal nonzero lengths, got "
                f"{len(self.values)} and {len(self.probs)}"
            )
        for v in self.values:
            if not _finite(v) or not 0.0 <= v <= 1.0:
                return f"values: reward {v!r} outside [0, 1]"
        for p in self.probs:
            if not _finite(p) or p < 0:
                return f"probs: negative or non-finite probability {p!r}"
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            return f"probs: probabilities sum to {total!r}, expected 1"
        return None

    def from_uniform(self, u):
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.values) - 1)
        return np.clip(np.asarray(self.values, dtype=np.float64)[idx], 0.0, 1.0)


RewardDistribution = Union[Bernoulli, Beta, Exponential, FiniteDiscrete]

_KINDS = {cls.kind: cls for cls in (Bernoulli, Beta, Exponential, FiniteDiscrete)}
_FIELDS = {
    "bernoulli": ("p",),
    "beta": ("a", "b"),
    "exponential": ("rate",),
    "finite": ("values", "probs"),
}


def analytic_mean(dist: RewardDistribution) -> float:
    """Exact expectation of the unclamped law."""
    return dist.mean()


def clamped_mean(dist: RewardDistribution) -> float:
    """Expectation of ``min(max(X, 0), 1)``; differs from the analytic mean only for exponentials."""
    if isinstance(dist, Exponential):
        return dist.clamped_mean()
    return dist.mean()


def validate(dist) -> str | None:
    """Return ``None`` when ``dist`` satisfies its invariants, else a description of the first violation."""
    if type(dist) not in _KINDS.values():
        return f"kind: unknown distribution {dist!r}"
    return dist.violation()


def sample_at(dist: RewardDistribution, seed: int, index, lane, slot):
    """Clamped draw(s) stored at the given stream addresses."""
    if dist.from_uniform is not None:
        return dist.from_uniform(_rng.uniform_at(seed, index, lane, slot))
    return np.clip(_rng.beta_at(seed, index, lane, slot, dist.a, dist.b), 0.0, 1.0)


def sample(dist: RewardDistribution, stream: RandomStream, size: int | None = None):
    """Draw from ``dist`` on the stream's current lane, advancing it by one slot per draw."""
    slots = stream.take(size)
    index = stream.index[:, None] if stream.batched and size is not None else stream.index
    out = sample_at(dist, stream.seed, index, stream.lane, slots)
    return float(out) if np.ndim(out) == 0 else out


def from_dict(spec: dict) -> RewardDistribution:
    """Build a distribution from its config form, e.g. ``{"kind": "bernoulli", "p": 0.5}``.

    Raises ``ValueError`` naming the offending key when the spec is malformed or
    violates an invariant.
    """
    if not isinstance(spec, dict):
        raise ValueError(f"distribution spec must be an object, got {spec!r}")
    kind = spec.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"kind: unknown distribution kind {kind!r} (expected one of {sorted(_KINDS)})")
    fields = _FIELDS[kind]
    extra = set(spec) - set(fields) - {"kind"}
    if extra:
        raise ValueError(f"{sorted(extra)[0]}: unexpected key for {kind} distribution")
    missing = [f for f in fields if f not in spec]
    if missing:
        raise ValueError(f"{missing[0]}: missing for {kind} distribution")
    kwargs = {f: spec[f] for f in fields}
    if kind == "finite":
        for f in fields:
            if not isinstance(kwargs[f], (list, tuple)):
                raise ValueError(f"{f}: expected a list of numbers")
    dist = _KINDS[kind](**kwargs)
    problem = validate(dist)
    if problem:
        raise ValueError(problem)
    return dist


def to_dict(dist: RewardDistribution) -> dict:
    out = {"kind": dist.kind}
    for f in _FIELDS[dist.kind]:
        value = getattr(dist, f)
        out[f] = list(value) if isinstance(value, tuple) else value
    return out

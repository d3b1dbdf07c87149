"""Counter-based random streams built on Philox4x32-10.

Every variate is addressed by ``(seed, stream index, lane, slot)``:

* the 64-bit seed is the Philox key,
* the 64-bit stream index (one per Monte Carlo run) fills counter words 0-1,
* the slot (the n-th variate drawn on a lane) fills counter word 2,
* the lane (a purpose/agent/arm triple) and a 12-bit block number fill word 3.

Because a variate is a pure function of its address, a run produces the same
numbers whether it is simulated alone or inside a batch of thousands, and in
whatever order batches execute. Rejection samplers get up to 4096 Philox
blocks per slot, so one variate always consumes exactly one slot.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = [
    "RandomStream",
    "philox4x32",
    "lane_id",
    "uniform_at",
    "gamma_at",
    "beta_at",
    "GENERAL",
    "REWARD",
    "POLICY",
    "COIN",
    "KERNEL",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_U64 = (1 << 64) - 1

BLOCK_BITS = 12
LANE_BITS = 20

# lane purposes
GENERAL = 0
REWARD = 1
POLICY = 2
COIN = 3
KERNEL = 4

# gamma variates: blocks [part*2048, part*2048 + 2046] are attempts, the
# last block of each half feeds the shape < 1 boost
_GAMMA_PART = 2048
_GAMMA_ATTEMPTS = _GAMMA_PART - 1


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32 with 10 rounds, elementwise over broadcast counter arrays.

    Counter and key words are 32-bit values held in uint64 arrays so the
    32x32 -> 64 bit products are exact. Returns the four output words.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(
        *(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    )
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def lane_id(purpose: int, agent: int = 0, arm: int = 0) -> int:
    """Pack a lane number: 4 bits purpose, 4 bits agent, 12 bits arm."""
    if not (0 <= purpose < 16 and 0 <= agent < 16 and 0 <= arm < 4096):
        raise ValueError(f"lane out of range: purpose={purpose} agent={agent} arm={arm}")
    return (purpose << 16) | (agent << 12) | arm


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= _U64:
        raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


def _words(seed: int, index, lane, slot, block):
    seed = _check_u64("seed", seed)
    index = np.asarray(index, dtype=np.uint64)
    lane = np.asarray(lane, dtype=np.uint64)
    block = np.asarray(block, dtype=np.uint64)
    return philox4x32(
        index & _MASK32,
        index >> _SHIFT32,
        np.asarray(slot, dtype=np.uint64),
        (lane << np.uint64(BLOCK_BITS)) | block,
        seed & 0xFFFFFFFF,
        seed >> 32,
    )


def _to_unit(hi, lo):
    # 52 random bits; (k + 0.5) / 2**52 is exact and lies strictly inside (0, 1)
    k = (hi >> np.uint64(6)).astype(np.float64) * 67108864.0 + (lo >> np.uint64(6)).astype(np.float64)
    return (k + 0.5) * 2.0**-52


def uniform_pair_at(seed: int, index, lane, slot, block=0):
    """Two independent uniforms on (0, 1) from one Philox block."""
    w0, w1, w2, w3 = _words(seed, index, lane, slot, block)
    return _to_unit(w0, w1), _to_unit(w2, w3)


def uniform_at(seed: int, index, lane, slot):
    """The uniform variate stored at ``slot`` of ``lane``; shape follows broadcasting."""
    return uniform_pair_at(seed, index, lane, slot)[0]


def gamma_at(seed: int, index, lane, slot, shape, part: int = 0):
    """Gamma(shape, 1) variates by Marsaglia-Tsang rejection.

    Shapes below one use the boost Gamma(a) = Gamma(a + 1) * U**(1/a).
    ``part`` (0 or 1) splits a slot's blocks so two gammas can share a slot,
    which is how :func:`beta_at` builds its ratio.
    """
    index, lane, slot, shape = np.broadcast_arrays(
        np.asarray(index, dtype=np.uint64),
        np.asarray(lane, dtype=np.uint64),
        np.asarray(slot, dtype=np.uint64),
        np.asarray(shape, dtype=np.float64),
    )
    out_shape = shape.shape
    index, lane, slot, shape = (a.ravel() for a in (index, lane, slot, shape))
    if np.any(~(shape > 0)) or np.any(~np.isfinite(shape)):
        raise ValueError("gamma shape must be positive and finite")
    boost = shape < 1.0
    d = np.where(boost, shape + 1.0, shape) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(shape.size)
    base = part * _GAMMA_PART

    pending = None  # None means every element, which avoids fancy indexing on attempt 0
    for attempt in range(_GAMMA_ATTEMPTS):
        if pending is None:
            ix, ln, sl, dd, cc = index, lane, slot, d, c
        else:
            ix, ln, sl, dd, cc = index[pending], lane[pending], slot[pending], d[pending], c[pending]
        ua, ub = uniform_pair_at(seed, ix, ln, sl, base + attempt)
        x = ndtri(ua)
        v = 1.0 + cc * x
        v = v * v * v
        positive = v > 0
        logv = np.log(np.where(positive, v, 1.0))
        ok = positive & (np.log(ub) < 0.5 * x * x + dd - dd * v + dd * logv)
        if pending is None:
            out[ok] = (dd * v)[ok]
            pending = np.flatnonzero(~ok)
        else:
            out[pending[ok]] = (dd * v)[ok]
            pending = pending[~ok]
        if pending.size == 0:
            break
    else:
        raise RuntimeError("gamma rejection sampler exhausted its block budget")

    if boost.any():
        b = np.flatnonzero(boost)
        u, _ = uniform_pair_at(seed, index[b], lane[b], slot[b], base + _GAMMA_ATTEMPTS)
        out[b] *= u ** (1.0 / shape[b])
    return out.reshape(out_shape)


def beta_at(seed: int, index, lane, slot, a, b):
    """Beta(a, b) as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b) drawn on one slot."""
    x = gamma_at(seed, index, lane, slot, a, part=0)
    y = gamma_at(seed, index, lane, slot, b, part=1)
    total = x + y
    # both gammas underflow only for vanishing shapes; fall back to the midpoint
    safe = total > 0
    return np.where(safe, x / np.where(safe, total, 1.0), 0.5)


class RandomStream:
    """Deterministic stream of variates for one ``(seed, index)`` pair.

    ``index`` may also be an integer array, in which case the object stands for
    a batch of independent streams that are always advanced in lockstep (one
    row per Monte Carlo run). Sequential draws through :meth:`uniform` and
    friends consume slots of ``self.lane``; the ``*_at`` methods address slots
    directly and do not move the cursor.
    """

    def __init__(self, seed: int, index=0, lane: int = GENERAL):
        self.seed = _check_u64("seed", seed)
        if np.ndim(index) == 0:
            self.index = _check_u64("stream index", index)
        else:
            self.index = np.asarray(index, dtype=np.uint64)
        self.lane = int(lane)
        self.position = 0

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, index={self.index!r}, lane={self.lane}, position={self.position})"

    @property
    def batched(self) -> bool:
        return np.ndim(self.index) > 0

    def with_lane(self, lane: int) -> "RandomStream":
        return RandomStream(self.seed, self.index, lane)

    def take(self, size: int | None = None):
        """Reserve the next slot (or ``size`` slots) on this stream's lane."""
        if size is None:
            slot = self.position
            self.position += 1
            return slot
        slots = np.arange(self.position, self.position + size, dtype=np.uint64)
        self.position += size
        return slots

    def _index_for(self, slots):
        if self.batched and np.ndim(slots) > 0:
            return self.index[:, None]
        return self.index

    def uniform(self, size: int | None = None):
        slots = self.take(size)
        out = uniform_at(self.seed, self._index_for(slots), self.lane, slots)
        return float(out) if np.ndim(out) == 0 else out

    def gamma(self, shape: float, size: int | None = None):
        slots = self.take(size)
        out = gamma_at(self.seed, self._index_for(slots), self.lane, slots, shape)
        return float(out) if np.ndim(out) == 0 else out

    def beta(self, a: float, b: float, size: int | None = None):
        slots = self.take(size)
        out = beta_at(self.seed, self._index_for(slots), self.lane, slots, a, b)
        return float(out) if np.ndim(out) == 0 else out

    def uniform_at(self, lane, slot):
        return uniform_at(self.seed, self.index, lane, slot)

    def beta_at(self, lane, slot, a, b):
        return beta_at(self.seed, self.index, lane, slot, a, b)

"""Counter-based random draws keyed by (master seed, trial, stream key, counter).

Every draw is a pure function of its key, so trials can run in any order, on
any number of threads, and still reproduce bit for bit. The mixing function is
the SplitMix64 finalizer; a stream is the SplitMix64 sequence started at a
state derived from (seed, trial, key), indexed directly by the counter.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)

# lanes share one counter space: draw index = counter * N_LANES + lane
N_LANES = 4
LANE_DIRECTION = 0
LANE_SELECT = 1
LANE_STEP = 2
LANE_RULE = 3

_INV_2_53 = 1.0 / 9007199254740992.0


@nb.njit(nb.uint64(nb.uint64), cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(nb.uint64(nb.uint64, nb.uint64, nb.uint64), cache=True)
def stream_base(seed, trial, key):
    """Starting state of the stream for one (seed, trial, key) triple."""
    z = mix64(seed ^ _SEED_SALT)
    z = mix64(z + (trial + np.uint64(1)) * _GOLDEN)
    return mix64(z + (key + np.uint64(1)) * _GOLDEN)


@nb.njit(nb.uint64(nb.uint64, nb.uint64, nb.uint64), cache=True)
def draw_u64(base, counter, lane):
    return mix64(base + (counter * np.uint64(N_LANES) + lane + np.uint64(1)) * _GOLDEN)


@nb.njit(nb.float64(nb.uint64, nb.uint64, nb.uint64), cache=True)
def draw_uniform(base, counter, lane):
    """Uniform double on [0, 1) with 53 random bits."""
    return float(draw_u64(base, counter, lane) >> np.uint64(11)) * _INV_2_53


@nb.njit(nb.int64(nb.uint64, nb.uint64), cache=True)
def draw_direction(base, step):
    """+1 or -1 with probability 1/2 each; 64 consecutive steps share one word."""
    word = draw_u64(base, step >> np.uint64(6), np.uint64(LANE_DIRECTION))
    bit = (word >> (step & np.uint64(63))) & np.uint64(1)
    return 1 if bit == np.uint64(1) else -1


def key_id(name: str | int) -> int:
    """Stable 64-bit key for a stream name such as an event id."""
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def as_seed(seed: int) -> np.uint64:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(seed)


class KeyedStream:
    """Python-side view of one keyed stream, used by the reference walk path."""

    def __init__(self, seed: int, trial: int, key: str | int):
        self.base = stream_base(as_seed(seed), np.uint64(trial), np.uint64(key_id(key)))

    def direction(self, step: int) -> int:
        return int(draw_direction(self.base, np.uint64(step)))

    def uniform(self, step: int, lane: int) -> float:
        return float(draw_uniform(self.base, np.uint64(step), np.uint64(lane)))


def trial_generator(seed: int, trial: int, purpose: str = "") -> np.random.Generator:
    """A numpy Generator seeded from (seed, trial, purpose) for non-kernel sampling."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, trial, key_id(purpose)])

"""Counter-based random numbers for the path tracer.

Every random draw is a pure function of (seed, pixel, sample, counter), so
renders are bit-identical no matter how pixels are partitioned across
workers.  The generator is a splitmix64 finalizer over a mixed 64-bit key;
it is not cryptographic, just well distributed and stateless.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = float(2.0 ** -53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + _GOLDEN).astype(np.uint64)
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def hash_u64(*parts) -> np.ndarray:
    """Mix integer arrays (or scalars) into one uint64 per element."""
    acc = np.uint64(0x243F6A8885A308D3)
    for p in parts:
        p = np.asarray(p, dtype=np.uint64)
        with np.errstate(over="ignore"):
            acc = _splitmix64(acc ^ (p * _GOLDEN))
    return acc


class PixelSampler:
    """Per-(pixel, sample) random stream with an explicit draw counter.

    `pixel` and `sample` are broadcastable integer arrays; each call to
    `next1`/`next2` advances the counter shared by the whole batch, so all
    lanes stay in lockstep regardless of which lanes are still active.
    """

    def __init__(self, seed: int, pixel, sample):
        with np.errstate(over="ignore"):
            self._key = hash_u64(np.uint64(seed), np.asarray(pixel, dtype=np.uint64) + np.uint64(1))
            self._key = _splitmix64(self._key ^ (np.asarray(sample, dtype=np.uint64) * _MIX2))
        self._ctr = 0

    def next1(self) -> np.ndarray:
        self._ctr += 1
        with np.errstate(over="ignore"):
            bits = _splitmix64(self._key ^ (np.uint64(self._ctr) * _GOLDEN))
        return (bits >> np.uint64(11)).astype(np.float64) * _INV53

    def next2(self):
        return self.next1(), self.next1()

"""Counter-based random streams, one per replicate.

Every replicate owns a 64-bit key derived from ``(seed, tag, index)`` and a
draw counter. The j-th uniform of a replicate is ``mix64(key + j * GOLDEN)``,
i.e. the SplitMix64 output function applied to a counter. Draws therefore
depend only on the replicate identity and how many numbers that replicate has
consumed, never on batch composition or thread scheduling, which is what lets
the simulators vectorise across replicates and still reproduce any single
path bit for bit.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# stream tags keep forward / dual / auxiliary draws of one seed disjoint
TAG_FORWARD = 1
TAG_DUAL = 2
TAG_SAMPLER = 3
TAG_SCAN = 4


def mix64(z):
    """SplitMix64 finaliser, elementwise on uint64 arrays (wrapping)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def derive_keys(seed: int, indices, tag: int = 0) -> np.ndarray:
    """Per-replicate stream keys for ``indices`` under ``seed`` and ``tag``."""
    idx = np.asarray(indices, dtype=np.uint64)
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        base = mix64(s + GOLDEN)
        base = mix64(base ^ np.uint64(tag & 0xFFFFFFFFFFFFFFFF))
        return mix64(base + (idx + np.uint64(1)) * GOLDEN)


class Streams:
    """A vector of independent counter-based uniform streams.

    ``uniform(rows)`` advances only the streams listed in ``rows``; the
    others keep their counters, so a replicate sees the same sequence no
    matter which other replicates share the batch.
    """

    def __init__(self, seed: int, indices, tag: int = 0):
        self.keys = derive_keys(seed, indices, tag)
        self.counters = np.zeros(self.keys.shape, dtype=np.uint64)

    def __len__(self):
        return self.keys.shape[0]

    def uniform(self, rows=None) -> np.ndarray:
        """One uniform in the open interval (0, 1) per selected stream."""
        if rows is None:
            rows = slice(None)
        with np.errstate(over="ignore"):
            self.counters[rows] += np.uint64(1)
            bits = mix64(self.keys[rows] + self.counters[rows] * GOLDEN)
        return ((bits >> _S11).astype(np.float64) + 0.5) * _INV53

    def exponential(self, rows=None) -> np.ndarray:
        """Unit-rate exponential variates."""
        return -np.log(self.uniform(rows))


def single_stream(seed: int, index: int = 0, tag: int = 0) -> Streams:
    return Streams(seed, [index], tag)

"""Counter-based random streams for the stochastic process model.

Every stochastic operation draws from its own stream, keyed by
(seed, replicate, sample, iteration, step code). Streams are independent
SplitMix64 sequences: the state advances by a fixed odd constant per draw
and the output is a strong 64-bit finalizer of the state. Because a stream
is fully determined by its key, adding or reordering *other* steps never
perturbs the draws of an existing one, and the vectorized (numpy) and
scalar-loop (numba) kernel backends consume bit-identical sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GAMMA", "MASK64", "mix64", "derive_state", "Stream", "StepCode"]

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_KEY_MUL = 0xD1342543DE82EF95
_KEY_ADD = 0x2545F4914F6CDD1D


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer (Python-int scalar form)."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _MUL1) & MASK64
    z ^= z >> 27
    z = (z * _MUL2) & MASK64
    z ^= z >> 31
    return z


def derive_state(*coords: int) -> int:
    """Derive an initial stream state from integer coordinates."""
    state = GAMMA
    for coord in coords:
        absorbed = mix64((int(coord) & MASK64) * _KEY_MUL + _KEY_ADD)
        state = mix64(((state ^ absorbed) + GAMMA) & MASK64)
    return state


class StepCode:
    """Stable identifiers for the stochastic steps of one extraction iteration."""

    SYNTH_JITTER = 1
    MIX = 2
    WASH = 3
    COLLECT = 4
    # Per grind cycle c (1-based): rupture and the following spray.
    RUPTURE_BASE = 10
    SPRAY_BASE = 30

    @staticmethod
    def rupture(cycle: int) -> int:
        return StepCode.RUPTURE_BASE + cycle

    @staticmethod
    def spray(cycle: int) -> int:
        return StepCode.SPRAY_BASE + cycle


@dataclass
class Stream:
    """A consumable random stream; draws go through the active kernel backend."""

    state: int

    @classmethod
    def for_key(cls, *coords: int) -> "Stream":
        return cls(derive_state(*coords))

    def binomial(self, counts: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Per-element Binomial(counts[i], p[i]) via one Bernoulli draw per trial."""
        from . import kernels

        out, self.state = kernels.binomial_counts(counts, p, self.state)
        return out

    def bernoulli_n(self, n: int, p: float) -> int:
        """Binomial(n, p) as a scalar."""
        out = self.binomial(np.array([n], dtype=np.int64), np.array([p], dtype=np.float64))
        return int(out[0])

    def assign_bins(self, n: int, lo: int, hi: int) -> np.ndarray:
        """Histogram of n uniform draws over the integer bins lo..hi inclusive."""
        from . import kernels

        hist, self.state = kernels.assign_bins(n, lo, hi, self.state)
        return hist

    def uniform(self) -> float:
        """One uniform double in [0, 1)."""
        self.state = (self.state + GAMMA) & MASK64
        return (mix64(self.state) >> 11) * 2.0**-53

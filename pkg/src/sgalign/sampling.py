"""Deterministic sampling used by diagnostics and the experiment harness.

The generator is a plain 64-bit linear congruential generator with Knuth's
MMIX constants (multiplier 6364136223846793005, increment
1442695040888963407, modulus 2**64).  Uniform doubles are formed from the
top 53 bits of the state.  The recurrence is fixed so that seeded reports
and perturbations are identical across platforms.
"""

from __future__ import annotations

import numpy as np

_MULT = 6364136223846793005
_INC = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    """Seeded deterministic generator; not for statistics, only for audits."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (_MULT * self.state + _INC) & _MASK
        return self.state

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = self.next_u64() >> 11  # 53 bits
        return low + (high - low) * (u / float(1 << 53))

    def uniform_vector(self, low, high, dim: int) -> np.ndarray:
        lo = np.broadcast_to(np.asarray(low, dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(high, dtype=float), (dim,))
        return np.array([self.uniform(lo[j], hi[j]) for j in range(dim)])

"""Deterministic random streams with explicit splitting.

Built on numpy's Philox counter-based generator. A stream is identified by a
64-bit seed; child streams are derived by hashing (seed, index) with a
splitmix64 finalizer, so sibling streams never overlap and the whole tree is
reproducible from the root seed alone.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z):
    z &= _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed, index):
    """Hash a (seed, index) pair into a new 64-bit seed."""
    if index < 0:
        raise ValueError("child index must be nonnegative")
    return _splitmix64((int(seed) + (int(index) + 1) * _GOLDEN) & _MASK64)


class RngStream:
    """A seeded random stream that can spawn independent child streams."""

    algorithm = "philox4x64"

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, index):
        """Independent stream number ``index`` derived from this one."""
        return RngStream(derive_seed(self.seed, index))

    # Thin passthroughs; all drawing goes through these so the backing
    # generator stays private.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed:#018x})"

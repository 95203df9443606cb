"""Deterministic counter-based random number generator.

The generator is splitmix64 used in counter mode: draw ``k`` of a stream with
seed ``s`` is ``mix64(s + (k+1) * GAMMA)`` where GAMMA is the 64-bit golden
ratio constant and ``mix64`` is the splitmix64 finalizer.  Every quantity is
computed modulo 2**64 with pure integer arithmetic, so two generators with the
same seed produce identical streams on any platform, and a block of draws can
be produced vectorized without touching the sequential state more than once.

Uniform doubles take the top 53 bits of a draw (range [0, 1)); normals come
from the Box-Muller transform on pairs of uniforms.  See README for the exact
stream layout, including how child streams are derived.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def _mix64_int(z):
    """splitmix64 finalizer on a Python int (mod 2**64)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    """splitmix64 finalizer on a uint64 ndarray (wraps mod 2**64)."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Seedable deterministic RNG with a single owner.

    State is (seed, counter); every draw advances the counter.  Identical
    seeds yield identical streams across runs and platforms.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def spawn(self, stream):
        """Derive an independent child generator for a named sub-stream.

        Child seed is ``mix64(mix64(seed) ^ ((stream + 1) * GAMMA))``; distinct
        stream ids give distinct, decorrelated child streams.
        """
        child = _mix64_int(_mix64_int(self.seed) ^ (((int(stream) + 1) * _GAMMA) & _MASK64))
        return Rng(child)

    def _raw(self, n):
        """Next ``n`` raw uint64 draws as an ndarray."""
        start = self.counter + 1
        self.counter += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        return _mix64_array(z)

    def next_u64(self):
        """Single raw 64-bit draw as a Python int."""
        return int(self._raw(1)[0])

    def uniform(self, low=0.0, high=1.0, size=None):
        """Uniform doubles in [low, high). Scalar when ``size`` is None."""
        n = 1 if size is None else int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        out = low + (high - low) * u
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def normal(self, mean=0.0, std=1.0, size=None):
        """Gaussian doubles via Box-Muller. Scalar when ``size`` is None."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        # u1 shifted into (0, 1] so log never sees zero
        u1 = ((self._raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self._raw(m) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = mean + std * z
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def randint(self, n):
        """Integer in [0, n). Bias is O(n / 2**53), negligible for desk-scale n."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return int(self.uniform() * n)

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle of a mutable sequence."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

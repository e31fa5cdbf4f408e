"""Deterministic counter-based random streams.

Every stochastic choice in the simulator (model init, client sampling,
perturbation noise, data synthesis) draws from an independent stream derived
from one 64-bit master seed.  Streams are keyed by (purpose, client_id,
round_index), so any client's noise for any round can be regenerated in
isolation and results do not depend on scheduling or thread count.

The generator is the golden-gamma 64-bit mix (increment 0x9E3779B97F4A7C15,
finalizer shifts 30/27/31) used as a counter-based stream: output i is
mix(key + (i+1)*gamma).  With key 0 this reproduces the reference sequence of
the well-known generator these constants come from, which the tests pin.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """Scalar 64-bit finalizer; reference for the vectorized path."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def stream_key(master_seed: int, purpose: str, client_id: int = 0,
               round_index: int = 0) -> int:
    """Derive an independent 64-bit stream key from the master seed.

    The purpose string namespaces the stream (e.g. "init", "sample",
    "noise"); client_id and round_index separate per-client per-round
    streams so they can be pre-derived and used in any order.
    """
    h = mix64(int(master_seed) ^ _fnv1a(purpose.encode("utf-8")))
    h = mix64((h + (int(client_id) & _MASK)) & _MASK)
    h = mix64((h + (int(round_index) & _MASK)) & _MASK)
    return h


class CounterRng:
    """Counter-based stream over the 64-bit mix.

    Draw i (1-based) is mix(key + i*gamma) regardless of block sizes, so
    drawing 10 then 10 values equals drawing 20 at once.
    """

    def __init__(self, key: int):
        self.key = key & _MASK
        self.counter = 0

    def next_uint64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform01(self, n: int) -> np.ndarray:
        """Uniforms in (0, 1], from the top 53 bits; 0 is excluded so the
        Box-Muller log below is always finite."""
        z = self.next_uint64(n)
        return 1.0 - (z >> np.uint64(11)) * (2.0 ** -53)

    def uniform(self, n: int, low: float, high: float) -> np.ndarray:
        return low + (high - low) * self.uniform01(n)

    def gaussians(self, n: int, std: float) -> np.ndarray:
        """n zero-mean Gaussians with the given standard deviation
        (Box-Muller pairs; the spare of an odd draw is discarded)."""
        if std < 0:
            raise ValueError(f"negative standard deviation: {std}")
        pairs = (n + 1) // 2
        u1 = self.uniform01(pairs)
        u2 = self.uniform01(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return std * out[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n).  Index draws use modulo
        reduction; the bias is negligible for n far below 2**64."""
        idx = np.arange(n)
        if n < 2:
            return idx
        z = self.next_uint64(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(z[n - 1 - i] % np.uint64(i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def choose_without_replacement(self, population: int, k: int) -> np.ndarray:
        """k distinct indices from range(population), sorted ascending."""
        if k > population:
            raise ValueError(f"cannot choose {k} from {population}")
        idx = np.arange(population)
        z = self.next_uint64(k)
        for i in range(k):
            j = i + int(z[i] % np.uint64(population - i))
            idx[i], idx[j] = idx[j], idx[i]
        return np.sort(idx[:k])

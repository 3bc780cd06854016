"""Counter-based deterministic random streams.

Every random draw in this package is a pure function of a 64-bit seed and a
stream position, so any slice of a stream can be regenerated later from the
(seed, counter) pair alone.  That property is what lets a layer discard its
sketch matrix after the forward pass and rebuild it bit-for-bit in the
backward pass.

The generator is the SplitMix64 finalizer applied to ``seed + k * GAMMA`` for
position ``k``; there is no sequential state to advance, so blocks of outputs
for many seeds vectorize as plain uint64 array arithmetic.
"""

from __future__ import annotations

import math
import struct

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# 2^-53: maps the top 53 bits of a uint64 onto a float64 grid in [0, 1).
_U53 = 2.0 ** -53

_TWO_PI = 2.0 * math.pi


def mix_int(z: int) -> int:
    """SplitMix64 finalizer on a Python int (no numpy scalar overflow warnings)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap silently; scalar ops would warn, hence mix_int above.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


def derive_seed(master: int, *nonces: int) -> int:
    """Derive a child seed from a master seed and integer nonces.

    Distinct nonce tuples give distinct child seeds with overwhelming
    probability, so (layer, step) pairs can each get an independent stream.
    """
    h = mix_int(master)
    for nonce in nonces:
        h = mix_int((h + _GAMMA) ^ (nonce & _MASK))
    return h


def derive_seed_block(master: int, nonces: np.ndarray) -> np.ndarray:
    """Vectorized ``derive_seed(master, n)`` for an array of single nonces."""
    h = np.uint64((mix_int(master) + _GAMMA) & _MASK)
    return _mix_array(h ^ np.asarray(nonces).astype(np.uint64))


def raw_block(seeds: np.ndarray, start: int, count: int) -> np.ndarray:
    """uint64 outputs at positions ``start .. start+count-1`` for each seed.

    Returns shape ``(len(seeds), count)``.  Position ``k`` of stream ``s`` is
    ``mix(s + (k+1) * GAMMA)``; the +1 keeps position 0 distinct from the seed
    itself.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    if seeds.ndim != 1:
        raise ValueError("seeds must be a 1-D array")
    idx = np.uint64(start) + np.arange(1, count + 1, dtype=np.uint64)
    return _mix_array(seeds[:, None] + idx[None, :] * np.uint64(_GAMMA))


def uniform_block(seeds: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """float64 uniforms in [0, 1), one uint64 consumed per output."""
    bits = raw_block(seeds, start, count) >> np.uint64(11)
    return bits.astype(np.float64) * _U53


def sign_block(seeds: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """float64 values in {-1.0, +1.0} from the top bit, one uint64 per output."""
    bits = raw_block(seeds, start, count) >> np.uint64(63)
    return 1.0 - 2.0 * bits.astype(np.float64)


def normal_block(seeds: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """Standard normals via Box-Muller, ``2 * ceil(count/2)`` uint64 per stream.

    The consumption count is fixed by ``count`` alone so callers can advance
    their counters without inspecting the output.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    if count == 0:
        return np.zeros((seeds.shape[0], 0), dtype=np.float64)
    half = (count + 1) // 2
    raw = raw_block(seeds, start, 2 * half)
    # u1 in (0, 1] keeps the log finite; u2 in [0, 1) spans the full angle.
    u1 = ((raw[:, :half] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
    u2 = (raw[:, half:] >> np.uint64(11)).astype(np.float64) * _U53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    out = np.empty((seeds.shape[0], 2 * half), dtype=np.float64)
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :count]


class RngState:
    """A (seed, counter) cursor into one deterministic stream.

    The counter records how many raw uint64 positions have been consumed, so
    serializing the pair mid-stream and resuming elsewhere continues the exact
    sequence.  All drawing methods advance the counter by a count that depends
    only on the request size.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        if counter < 0:
            raise ValueError("counter must be nonnegative")
        self.seed = int(seed) & _MASK
        self.counter = int(counter)

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, counter={self.counter})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RngState):
            return NotImplemented
        return self.seed == other.seed and self.counter == other.counter

    def _seed_arr(self) -> np.ndarray:
        return np.array([self.seed], dtype=np.uint64)

    def raw(self, count: int) -> np.ndarray:
        out = raw_block(self._seed_arr(), self.counter, count)[0]
        self.counter += count
        return out

    def uniform(self, count: int) -> np.ndarray:
        out = uniform_block(self._seed_arr(), count, start=self.counter)[0]
        self.counter += count
        return out

    def signs(self, count: int) -> np.ndarray:
        out = sign_block(self._seed_arr(), count, start=self.counter)[0]
        self.counter += count
        return out

    def normal(self, count: int) -> np.ndarray:
        out = normal_block(self._seed_arr(), count, start=self.counter)[0]
        self.counter += 2 * ((count + 1) // 2)
        return out

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of range(n) by sorting n raw draws (ties are ~impossible)."""
        keys = self.raw(n)
        return np.argsort(keys, kind="stable")

    def to_bytes(self) -> bytes:
        return struct.pack("<QQ", self.seed, self.counter)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RngState":
        if len(blob) != 16:
            raise ValueError(f"expected 16 bytes of state, got {len(blob)}")
        seed, counter = struct.unpack("<QQ", blob)
        return cls(seed, counter)

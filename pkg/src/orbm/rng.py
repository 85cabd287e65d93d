"""Counter-based random numbers.

Every draw is a pure function of ``(key, stream, counter)``: the 64-bit state
``key_stream + (counter + 1) * 0x9E3779B97F4A7C15 (mod 2**64)`` is passed
through the SplitMix64 finalizer. This is the SplitMix64 sequence with random
access, so replica ``k`` step ``j`` can be drawn without touching any other
replica. Uniforms take the top 53 bits, offset by half an ulp so they lie in
the open interval (0, 1); Gaussians are the inverse normal CDF of those
uniforms (``scipy.special.ndtri``). The algorithm uses only integer
arithmetic and a correctly rounded transform, so seeds are portable.

Streams in use:

* ``GAUSSIAN`` -- driver increments, counter ``2*j + c`` for step ``j``
  and coordinate ``c``.
* ``BRIDGE`` -- uniforms for Brownian-bridge crossing tests, counter ``j``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

GAUSSIAN = 0
BRIDGE = 1

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN_U = np.uint64(GOLDEN)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0**-53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed: int, stream: int) -> int:
    """Base state of ``stream`` for ``seed``."""
    return mix64((seed & MASK64) ^ mix64(stream + GOLDEN))


def replica_seed(seed_base: int, k: int) -> int:
    """Seed of replica ``k`` in a Monte Carlo run keyed by ``seed_base``."""
    return mix64((mix64(seed_base + GOLDEN) + (k + 1) * GOLDEN) & MASK64)


def raw_bits(keys, counters) -> np.ndarray:
    """64-bit outputs for broadcast ``keys`` (stream keys) and ``counters``."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = keys + (counters + np.uint64(1)) * _GOLDEN_U
    return _mix64_array(state)


def uniforms(keys, counters) -> np.ndarray:
    bits = raw_bits(keys, counters)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def normals(keys, counters) -> np.ndarray:
    return ndtri(uniforms(keys, counters))


def gaussian_increments(seed: int, n_steps: int, dt: float, start: int = 0) -> np.ndarray:
    """``(n_steps, 2)`` Brownian increments with variance ``dt`` per coordinate.

    Row ``i`` is step ``start + i``, so blocks can be drawn lazily.
    """
    key = np.uint64(stream_key(seed, GAUSSIAN))
    counters = np.arange(2 * start, 2 * (start + n_steps), dtype=np.uint64)
    return (np.sqrt(dt) * normals(key, counters)).reshape(n_steps, 2)


def stream_keys(seeds, stream: int) -> np.ndarray:
    return np.array([stream_key(int(s), stream) for s in seeds], dtype=np.uint64)

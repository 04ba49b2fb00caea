"""Counter-based random streams.

Every uniform variate is a pure function of ``(seed, stream, step, slot)``,
computed with the Philox4x32-10 block cipher. One stream per particle means
the numbers a particle sees never depend on how the ensemble is partitioned
across workers or on how many rejection retries its neighbours needed.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 on arrays of 32-bit words held in uint64.

    ``counter`` is a sequence of four broadcastable arrays, ``key`` a pair.
    Returns four arrays of 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    k0, k1 = (np.uint64(int(k) & 0xFFFFFFFF) for k in key)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    # 53-bit double in [0, 1)
    a = (hi >> np.uint64(5)).astype(np.float64)
    b = (lo >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b) * (1.0 / 9007199254740992.0)


class CounterRNG:
    """Stateless generator keyed by a 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self._key = (seed & 0xFFFFFFFF, seed >> 32)

    def uniform_pair(self, streams, step: int, slot: int) -> np.ndarray:
        """Two independent U[0,1) variates per stream, shape ``(len(streams), 2)``."""
        streams = np.asarray(streams, dtype=np.uint64)
        step = int(step)
        x0, x1, x2, x3 = philox4x32(
            (streams & _MASK, streams >> _S32, np.uint64(step & 0xFFFFFFFF), np.uint64(slot)),
            self._key,
        )
        out = np.empty(streams.shape + (2,))
        out[..., 0] = _to_unit(x0, x1)
        out[..., 1] = _to_unit(x2, x3)
        return out

    def batch(self, streams, step: int) -> "StreamBatch":
        return StreamBatch(self, np.asarray(streams, dtype=np.uint64), step)


class StreamBatch:
    """A set of particle streams at one time step.

    Samplers ask for ``uniform(slot)``; distinct slots give independent
    numbers, and ``subset`` keeps the stream identities of the selected rows.
    """

    def __init__(self, rng: CounterRNG, streams: np.ndarray, step: int):
        self.rng = rng
        self.streams = streams
        self.step = step

    def __len__(self) -> int:
        return len(self.streams)

    def uniform(self, slot: int) -> np.ndarray:
        return self.rng.uniform_pair(self.streams, self.step, slot)

    def subset(self, mask) -> "StreamBatch":
        return StreamBatch(self.rng, self.streams[mask], self.step)


class GeneratorBatch:
    """Adapter so samplers also accept a plain ``numpy.random.Generator``."""

    def __init__(self, gen: np.random.Generator, size: int):
        self.gen = gen
        self.size = size

    def __len__(self) -> int:
        return self.size

    def uniform(self, slot: int) -> np.ndarray:
        return self.gen.random((self.size, 2))

    def subset(self, mask) -> "GeneratorBatch":
        return GeneratorBatch(self.gen, int(np.count_nonzero(mask)))


def as_batch(rng, size: int):
    if isinstance(rng, (StreamBatch, GeneratorBatch)):
        if len(rng) != size:
            raise ValueError(f"stream batch has {len(rng)} rows, expected {size}")
        return rng
    if isinstance(rng, np.random.Generator):
        return GeneratorBatch(rng, size)
    if isinstance(rng, (int, np.integer)):
        return GeneratorBatch(np.random.default_rng(int(rng)), size)
    raise TypeError(f"unsupported random source {type(rng).__name__}")

"""Seeded random substreams.

Every stream is a PCG64 generator (numpy's default 64-bit bit generator).
Substreams are derived from the campaign seed with numpy's SeedSequence
hashing, using a spawn key of ``(replication, purpose, index)``:

    purpose 0  miner streams, index = miner position in the config
    purpose 1  network stream (random link delays), index = 0
    purpose 2  ad-hoc sampling streams (tests, standalone draws)

Two streams with different keys are statistically independent, and the
mapping never depends on how many other streams exist, so replications can
run in any order or in parallel without changing results.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1

MINER_STREAM = 0
NETWORK_STREAM = 1
SAMPLING_STREAM = 2


def check_seed(seed) -> int:
    seed = int(seed)
    if seed < 0 or seed > SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def substream(seed: int, replication: int = 0, purpose: int = SAMPLING_STREAM, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(int(replication), int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int) -> np.random.Generator:
    """Convenience stream for standalone sampling (replication 0)."""
    return substream(seed, 0, SAMPLING_STREAM, 0)


class UniformStream:
    """Buffered source of uniforms on (0, 1] drawn from one generator.

    Draws are taken from ``Generator.random`` in fixed-size batches; PCG64
    produces the same doubles whether requested one at a time or in bulk, so
    buffering does not change the sequence.
    """

    __slots__ = ("_gen", "_buf", "_pos", "_batch")

    def __init__(self, gen: np.random.Generator, batch: int = 4096):
        self._gen = gen
        self._batch = batch
        self._buf = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            # 1 - U maps [0, 1) onto (0, 1] so -log never sees zero
            self._buf = (1.0 - self._gen.random(self._batch)).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

"""Deterministic random streams derived from one master seed.

Every consumer of randomness asks for a generator by (stream name, index).
The generator is seeded from ``SeedSequence([seed, stream_id, index])`` so
that any sample, step or epoch can be regenerated in isolation.  This is what
makes checkpoint-resume bit-identical without saving generator state.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "simulation": 0,  # one generator per training/export sample
    "init": 1,        # network weight initialisation
    "shuffle": 2,     # one generator per epoch
    "testset": 3,     # synthetic fixtures and held-out test data
}


def derive_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    if stream not in STREAMS:
        raise KeyError(f"unknown random stream {stream!r}")
    seq = np.random.SeedSequence([int(seed) & (2**64 - 1), STREAMS[stream], int(index)])
    return np.random.Generator(np.random.PCG64(seq))


def derive_torch_seed(seed: int, stream: str, index: int = 0) -> int:
    return int(derive_rng(seed, stream, index).integers(0, 2**63 - 1))

"""
Seeded random streams.

All randomness comes from numpy's Philox (a 64-bit counter-based bit
generator). Independent consumers get their own substream keyed by
(seed, stream name, index), so results never depend on the order in which
parallel workers run.
"""

import zlib

import numpy as np

STREAM_SYNTH_TRAIN = "synth/train"
STREAM_SYNTH_TEST = "synth/test"
STREAM_INIT = "init"
STREAM_SHUFFLE = "shuffle"
STREAM_RELATIONS = "relations"
STREAM_PROTOTYPES = "prototypes"
STREAM_SUBSET = "subset"
STREAM_ADJUST = "adjust"


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, stream: str = "", index: int = 0) -> np.random.Generator:
    """Deterministic Philox generator for one named substream."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed), _stream_key(stream), int(index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

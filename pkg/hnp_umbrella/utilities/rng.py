"""
Per-rep random substreams.

A rep never shares generator state with another rep: each substream is keyed by
(master seed, rep index, purpose) through SeedSequence's hash mixing and drives a
counter-based Philox generator.
"""

import numpy as np

from .errors import InvalidArgumentError

# Purpose counters inside one rep
TRAIN_STREAM = 0
TEST_STREAM = 1
SPLIT_STREAM = 2
ROC_SPLIT_STREAM = 3


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    """Generator for the substream f(master_seed, keys)."""
    if master_seed is None or int(master_seed) < 0:
        raise InvalidArgumentError(f"master seed must be a non-negative integer, got {master_seed!r}")
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def rep_stream(master_seed: int, rep: int, purpose: int) -> np.random.Generator:
    return substream(master_seed, rep, purpose)

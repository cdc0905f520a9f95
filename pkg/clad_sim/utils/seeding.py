"""
Seed Streams

Every random draw in a run comes from a numpy Generator keyed by a tuple of integers
(master seed, round, client, purpose...). Two draws with different keys never share a
stream, and a draw's key does not depend on how many other draws happened before it.
"""

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator]

# Purpose tags keep streams for different jobs apart under the same numeric key.
STREAM_SAMPLE = 1
STREAM_SPLIT = 2
STREAM_UNLABELED = 3
STREAM_MODEL_INIT = 4
STREAM_TRAIN = 5
STREAM_KMEANS = 6
STREAM_DIRICHLET = 7


def rng_for(*keys: int) -> np.random.Generator:
    """Generator for the stream identified by keys."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def combine_seeds(*keys: int) -> int:
    """Fold several integers into one 32-bit seed."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def as_generator(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

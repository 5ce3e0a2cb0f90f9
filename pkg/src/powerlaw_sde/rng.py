"""Reproducible stream construction for all Monte Carlo work.

Every random stream in the package is a numpy Generator backed by the Philox
4x64-10 counter-based bit generator, keyed by a (base_seed, stream) pair:

    Generator(Philox(key=[base_seed, stream]))

Path simulations use stream = path index; auxiliary draws (stationary
sampling, projection directions, minibatch selection) use a documented
stream id. A path's output therefore depends only on (base_seed, path_index)
and the in-path draw order, never on batch size, chunking, or scheduling, so
identical configs reproduce bitwise on any machine with IEEE-754 doubles and
the same libm.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_generator(base_seed: int, stream: int) -> np.random.Generator:
    """Philox4x64-10 generator for a named substream of a base seed."""
    return np.random.Generator(np.random.Philox(key=[base_seed & _MASK64, stream & _MASK64]))


def path_generators(base_seed: int, n_paths: int, first: int = 0):
    """One generator per path, keyed by consecutive path indices."""
    return [stream_generator(base_seed, first + p) for p in range(n_paths)]

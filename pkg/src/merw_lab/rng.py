"""Reproducible uniform streams.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by the pair ``(seed, stream_id)``.  Streams with distinct
keys are independent, and within a stream the k-th draw is a pure function
of (seed, stream_id, k), so replicas can be generated in any order (or in
parallel) with bit-identical results.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

_MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int) -> Generator:
    """Generator for the uniform stream keyed by (seed, stream_id)."""
    key = np.array([seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    return Generator(Philox(key=key))


def uniform_block(generators: list[Generator], count: int) -> np.ndarray:
    """Next ``count`` uniforms from each stream, as a (count, n_streams) block.

    Column j continues stream j exactly where the previous block stopped.
    """
    out = np.empty((count, len(generators)))
    for j, gen in enumerate(generators):
        out[:, j] = gen.random(count)
    return out

"""Keyed, counter-based random streams.

Every random draw in the package goes through a :class:`numpy.random.Generator`
backed by the Philox counter-based bit generator.  Streams are addressed by a
root seed plus an arbitrary tuple of non-negative integer keys, e.g.
``stream(seed, iteration, segment)``, so that work items can be generated in any
order (or concurrently) and still produce identical numbers.
"""

from __future__ import annotations

import numpy as np

# Tags separating the purposes of sub-streams derived from one root seed.
SIMULATE = 1
OBSERVE = 2
IMPUTE = 3
DRIFT = 4
BANDS = 5
CHAIN = 6
INIT = 7


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *keys)``."""
    words = [int(seed)] + [int(k) for k in keys]
    if any(w < 0 for w in words):
        raise ValueError("seed and stream keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed, ``None`` or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    return stream(int(rng))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for deriving keyed sub-streams."""
    return int(rng.integers(0, 2**63 - 1))

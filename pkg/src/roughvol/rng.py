"""Seeded, counter-based random streams.

Every random draw in the package comes from a Philox generator built from a
``SeedSequence(base_seed, spawn_key=key)``. Streams with distinct keys are
statistically independent, and a stream depends only on ``(base_seed, key)``,
so work can be split across any number of workers without changing results.

Key layout used by the Monte Carlo lab:

* ``(0,)``        innovations of the observed (master) fBm path
* ``(1, day)``    fresh innovations for all continuations priced on ``day``;
                  path ``m`` uses row ``m`` of the draw
"""

from __future__ import annotations

import numpy as np

MASTER_PATH_KEY = 0
CONTINUATION_KEY = 1


def make_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))

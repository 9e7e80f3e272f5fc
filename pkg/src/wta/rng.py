"""Counter-based random streams.

Every stream is a Philox generator keyed by a root seed plus a tuple of
integer counters (cell, replicate, simulation, ...), so a job's random
numbers never depend on which worker runs it or in what order.
"""

from __future__ import annotations

import os

import numpy as np

DEFAULT_SEED_ENV = "WTA_SEED"


def default_seed() -> int:
    return int(os.environ.get(DEFAULT_SEED_ENV, "20240101"))


def stream(seed: int | None, *counters: int) -> np.random.Generator:
    if seed is None:
        seed = default_seed()
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.Philox(ss))

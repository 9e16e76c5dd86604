"""Per-path random streams.

Every path owns a Philox generator keyed by ``SeedSequence(seed,
spawn_key=(purpose, index))``.  The SeedSequence hash is the mixing function:
streams for different (purpose, index) pairs are statistically independent,
and a path's draws never depend on how an ensemble is chunked or scheduled.
"""

import numpy as np

PURPOSES = {"path": 0, "initial": 1, "pilot": 2, "field": 3}

MAX_SEED = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed, index=0, purpose="path"):
    """Generator for path ``index`` of the given purpose under master ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(PURPOSES[purpose], int(index)))
    return np.random.Generator(np.random.Philox(ss))


def streams(seed, start, stop, purpose="path"):
    return [stream(seed, i, purpose) for i in range(start, stop)]

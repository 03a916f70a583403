"""Counter-based random streams keyed by (seed, replica, component).

Every stream is a Philox generator whose key is derived from the master
seed and an integer spawn key, so a stream never depends on how many other
streams were created before it or on which thread consumes it.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed, *keys):
    """Return an independent ``numpy.random.Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def fresh_seed():
    """Draw a random 64-bit seed from OS entropy (recorded by callers)."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])

"""Deterministic derivation of independent RNG streams.

Every random draw in the package comes from a numpy Generator derived from a
single 64-bit master seed together with an integer path (role, replica,
particle, ...).  Equal paths reproduce the same stream, distinct paths give
statistically independent streams, and extending a run with more replicas or
particles never perturbs the streams that already exist.  This is what makes
reports byte-identical under any worker count: work units own their paths, so
the schedule cannot leak into the results.
"""

import numpy as np

# Stream roles.  Values are part of the on-disk reproducibility contract;
# never renumber.
ROLE_INITIAL = 0
ROLE_ENSEMBLE = 1
ROLE_FLOW = 2
ROLE_PAIR = 3
ROLE_SAMPLER = 4
ROLE_COMPARATOR = 5


def stream(master_seed, *path):
    """Return the Generator addressed by (master_seed, *path).

    Args:
        master_seed: non-negative int, the experiment seed.
        *path: non-negative ints, e.g. (role, replica) or
            (role, replica, particle).
    """
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    key = tuple(int(p) for p in path)
    if any(p < 0 for p in key):
        raise ValueError("stream path entries must be non-negative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))

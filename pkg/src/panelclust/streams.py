"""Deterministic random-stream derivation.

All randomness in the package flows from a single 64-bit seed through named
sub-streams, so that independent pieces of a run (posterior chain, prior
chain, simulation, replications) draw from non-overlapping, reproducible
generators.
"""

import numpy as np

# Named sub-stream ids. Replication fan-out appends the replication index.
CHAIN = 0
PRIOR_CHAIN = 1
SIMULATION = 2
WARMSTART = 3
INIT = 4


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def generator(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the sub-stream named by ``key``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))

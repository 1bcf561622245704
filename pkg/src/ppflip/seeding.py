"""Counter-based seed splitting.

Replica ``r`` of a run with master seed ``s`` draws from the stream keyed by
``SeedSequence(s, spawn_key=(r,))``, so any replica can be rerun on its own.
"""
from __future__ import annotations

import numpy as np


def replica_sequence(master: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(replica),))


def replica_seed(master: int, replica: int) -> int:
    """32-bit seed for the compiled kernels."""
    return int(replica_sequence(master, replica).generate_state(1, np.uint32)[0])


def replica_rng(master: int, replica: int) -> np.random.Generator:
    return np.random.default_rng(replica_sequence(master, replica))

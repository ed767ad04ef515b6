"""Master-seed splitting.

Every random quantity in a run is drawn from a generator keyed by
``(master_seed, stream, *indices)``.  Stream ids are fixed integers, so
adding a new stream never shifts the draws of an existing one.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "scenario": 0,     # per-episode layout; indices (stage, episode)
    "init": 1,         # network initialisation
    "explore": 2,      # per-episode epsilon-greedy draws; indices (stage, episode)
    "replay": 3,       # minibatch sampling; index (stage,)
    "evaluate": 4,     # evaluation trials; indices (n_uavs, trial)
}


def stream(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    key = [int(master_seed), STREAMS[name], *(int(i) for i in indices)]
    return np.random.default_rng(np.random.SeedSequence(key))

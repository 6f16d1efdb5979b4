"""Deterministic random-stream derivation for experiment runs.

Every random draw in a federated run comes from a substream keyed by
``(master seed, client id, round index, purpose code)``.  Substreams are
derived with ``numpy.random.SeedSequence``, so running clients or seeds in
parallel never changes the draws any component sees.
"""

from __future__ import annotations

import numpy as np

# Purpose codes. Stable by contract: changing a code changes every stream
# derived with it and breaks run reproducibility.
GLOBAL_INIT = 0
QUERY = 1
LOCAL_TRAIN = 2
LOCAL_ONLY = 3

_MASK64 = (1 << 64) - 1


def substream_seed(master_seed: int, client_id: int = 0, round_index: int = 0,
                   purpose: int = GLOBAL_INIT) -> int:
    """Derive the 64-bit seed for one (client, round, purpose) slot."""
    ss = np.random.SeedSequence([master_seed & _MASK64, client_id, round_index, purpose])
    return int(ss.generate_state(1, np.uint64)[0])


def substream(master_seed: int, client_id: int = 0, round_index: int = 0,
              purpose: int = GLOBAL_INIT) -> np.random.Generator:
    """Generator seeded for one (client, round, purpose) slot."""
    ss = np.random.SeedSequence([master_seed & _MASK64, client_id, round_index, purpose])
    return np.random.default_rng(ss)


def rng_from_seed(seed: int) -> np.random.Generator:
    """Generator from a bare seed; negative seeds are folded into 64 bits."""
    return np.random.default_rng(seed & _MASK64)

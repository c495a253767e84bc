"""Reproducible random streams.

All randomness comes from numpy's Philox4x32-10 bit generator, a
counter-based generator: the output is a keyed bijection of a counter.
The key for each stream is derived by ``numpy.random.SeedSequence`` from the
master seed and a spawn key

    (replication, role, index)

with ``role`` one of the constants below. The environment stream of a
replication is shared by every agent (common random numbers); agent and
particle-filter streams are indexed by the agent's position in the config;
reward-stack streams are indexed by action.
"""

from __future__ import annotations

import numpy as np

ROLE_ENV = 0
ROLE_AGENT = 1
ROLE_FILTER = 2
ROLE_STACK = 3


def stream(master_seed: int, replication: int, role: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication), int(role), int(index)))
    return np.random.Generator(np.random.Philox(ss))


class BatchUniforms:
    """Per-step uniform rows of fixed width, one generator per replication.

    Each generator fills ``block`` rows at a time, so the k-th row of a
    replication does not depend on how many replications are batched.
    """

    def __init__(self, gens, width: int, block: int = 4096):
        self.width = width
        self.gens = list(gens)
        self.block = block
        self._buf = None
        self._pos = block

    def next(self) -> np.ndarray:
        """Array of shape (n_reps, width) for the next step."""
        if self._pos >= self.block:
            self._buf = np.stack([g.random((self.block, self.width)) for g in self.gens])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out

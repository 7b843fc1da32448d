"""Counter-based random substreams derived from a single root seed.

Every stochastic component draws from its own substream, addressed by a
fixed integer tag plus structural indices (rank round, iteration, agent,
trial, ...).  Adding agents or iterations never perturbs the draws of the
existing ones, and independent trials can run in any order or in parallel.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

# Stream tags.  Keep stable: changing them changes every seeded result.
TAG_INIT = 0  # q^(0) initialization noise, path (l, agent)
TAG_ITER = 1  # per-iteration noise, path (l, t, agent)
TAG_TRIAL = 2  # Monte-Carlo trial seeds, path (trial,)
TAG_LDP = 3  # LDP baseline data noise
TAG_CENTRAL = 4  # centralized power-method init, path (l,)
TAG_PERTURB = 5  # random perturbation directions in privacy audits
TAG_PROBE = 6  # random observer-randomness realizations in audits


def substream(seed: int, *path: int) -> Generator:
    """Return the generator for the substream ``path`` of ``seed``."""
    return Generator(Philox(SeedSequence(seed, spawn_key=tuple(path))))


def child_seed(seed: int, *path: int) -> int:
    """Derive an independent integer seed, e.g. one per Monte-Carlo trial."""
    state = SeedSequence(seed, spawn_key=tuple(path)).generate_state(1, np.uint64)
    return int(state[0])

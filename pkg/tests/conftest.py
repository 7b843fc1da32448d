import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ddppm.data import Dataset, normalize_unit_ball, partition_rows, RawDataset
from ddppm.network import Topology, ring_mixing

PAPER_RING_W = np.array([
    [0.50, 0.25, 0.00, 0.25],
    [0.25, 0.50, 0.25, 0.00],
    [0.00, 0.25, 0.50, 0.25],
    [0.25, 0.00, 0.25, 0.50],
])


def synthetic_dataset(n, d, seed=0, spectrum=None):
    """Random unit-ball data, optionally with a prescribed singular spectrum
    of X X^T (spectrum given as the desired eigenvalue ratios)."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    if spectrum is not None:
        U, _, Vt = np.linalg.svd(X, full_matrices=False)
        s = np.sqrt(np.asarray(spectrum, dtype=float))
        X = (U[:, :len(s)] * s) @ Vt[:len(s)]
    return normalize_unit_ball(RawDataset(X, "synthetic"))


@pytest.fixture
def ring4():
    return Topology.create(PAPER_RING_W, c=8)


@pytest.fixture
def desk_data():
    """Small 2-agent instance used across privacy/analysis tests."""
    X = synthetic_dataset(8, 3, seed=42)
    return partition_rows(X, 2)

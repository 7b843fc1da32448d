"""Naive local-DP comparator: perturb the data, then a plain SVD.

Each agent adds Gaussian noise with variance 2 ln(1.25/delta) / epsilon^2
to its block and shares it; pooling the noisy blocks and noising the pooled
matrix are distributionally identical, so the implementation noises the
stacked matrix directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ddppm.data import Dataset, PartitionedDataset
from ddppm.rng import TAG_LDP, substream


@dataclass(frozen=True)
class LdpConfig:
    epsilon: float
    delta: float
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"need epsilon > 0, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"need delta in (0, 1), got {self.delta}")

    @property
    def sigma2(self) -> float:
        """Noise variance 2 ln(1.25/delta) / epsilon^2."""
        return 2.0 * math.log(1.25 / self.delta) / self.epsilon ** 2


def perturb_scaled(data: PartitionedDataset, sigma2: float, seed: int) -> Dataset:
    """Pooled X plus i.i.d. N(0, sigma2) entries; sigma2 = 0 returns X as is."""
    if sigma2 < 0:
        raise ValueError(f"need sigma2 >= 0, got {sigma2}")
    X = data.stacked()
    if sigma2 == 0.0:
        return Dataset(X)
    noise = substream(seed, TAG_LDP).normal(0.0, math.sqrt(sigma2), size=X.shape)
    return Dataset(X + noise)


def ldp_perturb(data: PartitionedDataset, cfg: LdpConfig) -> Dataset:
    """The noisy pooled dataset every agent ends up holding."""
    return perturb_scaled(data, cfg.sigma2, cfg.seed)


def ldp_estimate(X_tilde: Dataset, r: int) -> np.ndarray:
    """Top-r left singular vectors of the noisy data, sign-canonicalized.

    Columns are unit norm with their largest-magnitude entry positive so
    repeated trials are comparable (the sin error metric is sign-invariant
    anyway).
    """
    n, d = X_tilde.n, X_tilde.d
    if not 1 <= r <= min(n, d):
        raise ValueError(f"need 1 <= r <= min(n, d) = {min(n, d)}, got {r}")
    U, _, _ = np.linalg.svd(X_tilde.X, full_matrices=False)
    out = U[:, :r].copy()
    for j in range(r):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out

"""Mixing-matrix validation, the consensus operator, and the network operator.

The mixing matrix W drives average consensus (gossip) between agents.  A
valid W is entrywise nonnegative, doubly stochastic, symmetric, and its
support graph is connected; its second-largest eigenvalue modulus lambda2
sets the geometric rate at which c gossip rounds approximate the global
average.  The network operator Xi is the consensus-mediated surrogate of
X X^T whose spectrum governs the decentralized power iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ddppm.data import PartitionedDataset

_STOCH_TOL = 1e-10
_SUPPORT_TOL = 0.0  # an edge is any strictly positive entry


@dataclass(frozen=True)
class MixingDiagnostics:
    """Per-condition results of the mixing-matrix checks."""

    square: bool
    nonnegative: bool
    undirected: bool
    row_stochastic: bool
    col_stochastic: bool
    connected: bool
    symmetric: bool
    lambda2: float

    @property
    def ok(self) -> bool:
        return (self.square and self.nonnegative and self.undirected
                and self.row_stochastic and self.col_stochastic
                and self.connected and self.symmetric and self.lambda2 < 1.0)

    def failures(self) -> list:
        named = [
            ("nonnegative entries (i)", self.nonnegative),
            ("undirected support (ii)", self.undirected),
            ("row stochastic (iii)", self.row_stochastic),
            ("column stochastic (iii)", self.col_stochastic),
            ("connected (iv)", self.connected),
            ("symmetric", self.symmetric),
        ]
        out = [] if self.square else ["square"]
        out += [name for name, passed in named if not passed]
        if self.lambda2 >= 1.0:
            out.append("lambda2 < 1 (aperiodicity)")
        return out


def _second_largest_modulus(W: np.ndarray) -> float:
    mods = np.sort(np.abs(np.linalg.eigvals(W)))[::-1]
    return float(mods[1]) if mods.size > 1 else 0.0


def validate_mixing_matrix(W: np.ndarray) -> MixingDiagnostics:
    """Check the gossip-matrix conditions and report lambda2.

    Never raises; every condition is reported separately so a caller can
    name exactly what failed.  Connectivity is checked on the support graph
    and lambda2 is the second-largest eigenvalue modulus, which also guards
    against periodic matrices (modulus 1 fails the matrix).
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"mixing matrix must be square, got shape {W.shape}")
    m = W.shape[0]
    support = W > _SUPPORT_TOL
    nonneg = bool(np.all(W >= -_STOCH_TOL))
    undirected = bool(np.array_equal(support, support.T))
    rows_ok = bool(np.all(np.abs(W.sum(axis=1) - 1.0) <= _STOCH_TOL))
    cols_ok = bool(np.all(np.abs(W.sum(axis=0) - 1.0) <= _STOCH_TOL))
    symmetric = bool(np.max(np.abs(W - W.T)) <= _STOCH_TOL)
    n_comp, _ = connected_components(csr_matrix(support), directed=True,
                                     connection="strong")
    connected = bool(n_comp == 1)
    lambda2 = _second_largest_modulus(W) if m > 1 else 0.0
    return MixingDiagnostics(True, nonneg, undirected, rows_ok, cols_ok,
                             connected, symmetric, lambda2)


@dataclass(frozen=True)
class Topology:
    """A validated mixing matrix together with its consensus depth."""

    W: np.ndarray
    c: int
    lambda2: float

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        if self.c < 1:
            raise ValueError(f"need c >= 1 consensus rounds, got {self.c}")

    @classmethod
    def create(cls, W: np.ndarray, c: int) -> "Topology":
        diag = validate_mixing_matrix(W)
        if not diag.ok:
            raise ValueError("invalid mixing matrix: "
                             + ", ".join(diag.failures()) + " failed")
        return cls(np.asarray(W, dtype=float), int(c), diag.lambda2)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def Wc(self) -> np.ndarray:
        """W^c by repeated squaring (exact integer exponent)."""
        return np.linalg.matrix_power(self.W, self.c)


def consensus_apply(top: Topology, z: list) -> list:
    """Run c gossip rounds and rescale: output_i = m * sum_j (W^c)_ij z_j."""
    m = top.m
    if len(z) != m:
        raise ValueError(f"got {len(z)} agent vectors for m={m}")
    Z = np.asarray(z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("all agent vectors must share one dimension")
    mixed = m * (top.Wc() @ Z)
    return [mixed[i] for i in range(m)]


def ring_mixing(m: int, self_weight: float = 0.5) -> np.ndarray:
    """Ring topology: self_weight on the diagonal, the rest split between
    the two ring neighbors.  m=4 with the default weight is the reference
    experimental matrix (lambda2 = 1/2)."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if not 0.0 < self_weight < 1.0:
        raise ValueError(f"self_weight must be in (0, 1), got {self_weight}")
    if m == 1:
        return np.array([[1.0]])
    W = np.zeros((m, m))
    np.fill_diagonal(W, self_weight)
    side = (1.0 - self_weight) / 2.0
    for i in range(m):
        W[i, (i - 1) % m] += side
        W[i, (i + 1) % m] += side
    return W


def complete_mixing(m: int) -> np.ndarray:
    """Complete graph with uniform weights: one round reaches the average."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    return np.full((m, m), 1.0 / m)


def path_mixing(m: int) -> np.ndarray:
    """Path graph with Metropolis weights w_ij = 1 / (1 + max(deg_i, deg_j))."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if m == 1:
        return np.array([[1.0]])
    deg = np.full(m, 2)
    deg[0] = deg[-1] = 1
    W = np.zeros((m, m))
    for i in range(m - 1):
        w = 1.0 / (1.0 + max(deg[i], deg[i + 1]))
        W[i, i + 1] = W[i + 1, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


@dataclass(frozen=True)
class NetworkOperator:
    """The consensus surrogate of X X^T with its spectral data.

    mu holds the eigenvalues of Xi in descending order with basis columns
    aligned; consensus_gap is the directly computed ||Xi - X X^T||_2.
    lambda1/lambda2 are the top two eigenvalues of the exact X X^T, kept
    here so downstream bound evaluation has them alongside the gap.
    """

    Xi: np.ndarray
    mu: np.ndarray
    basis: np.ndarray
    consensus_gap: float
    lambda1: float
    lambda2: float
    lambda2_w: float
    c: int
    m: int
    min_eig_flagged: bool
    assumption3_ok: bool


def build_network_operator(data: PartitionedDataset, top: Topology) -> NetworkOperator:
    """Assemble Xi = D(X) (m W^c kron I_d) D(X)^T and its spectrum.

    The block form Xi[i, j] = m (W^c)_ij X_i X_j^T avoids materializing the
    kron product.  Warns (does not fail) when the consensus gap exceeds the
    eigengap of X X^T, i.e. when the gap assumption of the convergence
    analysis is violated.
    """
    if data.m != top.m:
        raise ValueError(f"data has m={data.m} agents but topology has m={top.m}")
    n = data.n
    Wc = top.Wc()
    Xi = np.empty((n, n))
    for i, (Xi_blk, oi) in enumerate(zip(data.blocks, data.offsets)):
        for j, (Xj_blk, oj) in enumerate(zip(data.blocks, data.offsets)):
            Xi[np.ix_(oi, oj)] = (top.m * Wc[i, j]) * (Xi_blk @ Xj_blk.T)
    Xi = 0.5 * (Xi + Xi.T)  # exact symmetry for eigh
    mu, basis = np.linalg.eigh(Xi)
    mu, basis = mu[::-1].copy(), basis[:, ::-1].copy()

    X = data.stacked()
    svals = np.linalg.svd(X, compute_uv=False)
    lambda1 = float(svals[0] ** 2)
    lambda2 = float(svals[1] ** 2) if svals.size > 1 else 0.0
    gap = float(np.linalg.norm(Xi - X @ X.T, 2))
    min_eig_flagged = bool(mu[-1] < -10.0 * np.finfo(float).eps * max(mu[0], 0.0))
    assumption3_ok = bool(gap <= lambda1 - lambda2)
    if not assumption3_ok:
        warnings.warn(f"consensus gap {gap:.3e} exceeds the eigengap "
                      f"{lambda1 - lambda2:.3e} of X X^T; the convergence "
                      "bound's premises are violated", stacklevel=2)
    return NetworkOperator(Xi=Xi, mu=mu, basis=basis, consensus_gap=gap,
                           lambda1=lambda1, lambda2=lambda2,
                           lambda2_w=top.lambda2, c=top.c, m=top.m,
                           min_eig_flagged=min_eig_flagged,
                           assumption3_ok=assumption3_ok)

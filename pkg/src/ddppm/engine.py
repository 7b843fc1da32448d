"""Multi-agent simulator for the decentralized DP power method.

Each agent holds a row block X_i and its own segment q_i of the iterate.
One iteration: project z_i = X_i^T q_i, mix the z's over c gossip rounds,
rescale by alpha, and add fresh Gaussian noise.  Only at the very end do
agents share their q_i segments and normalize.  Agent updates read nothing
but local state and the consensus output, so no agent ever sees another
agent's q segment before the final share.

Iterates are never renormalized mid-run (that would break the joint
Gaussianity the privacy accounting relies on); per-iteration norms are
recorded so callers can detect growth or shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ddppm.data import Dataset, PartitionedDataset
from ddppm.network import Topology
from ddppm.rng import TAG_CENTRAL, TAG_INIT, TAG_ITER, substream

_DEGENERATE_NORM = 1e-300


def geometric_schedule(T: int, ratio: float, eta: float = 1.0) -> tuple:
    """Noise schedule sigma_p(t) = eta * ratio^t for t = 1..T."""
    if ratio < 0:
        raise ValueError(f"need ratio >= 0, got {ratio}")
    return tuple(eta * ratio ** t for t in range(1, T + 1))


@dataclass(frozen=True)
class RunConfig:
    """All the algorithm knobs for one simulated run."""

    T: int
    r: int = 1
    c: int = 1
    alpha: float = 1.0
    sigma_q: float = 1.0
    sigma_p: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.T < 0:
            raise ValueError(f"need T >= 0, got {self.T}")
        if self.r < 1:
            raise ValueError(f"need r >= 1, got {self.r}")
        if self.c < 1:
            raise ValueError(f"need c >= 1, got {self.c}")
        if not self.alpha > 0:
            raise ValueError(f"need alpha > 0, got {self.alpha}")
        if not self.sigma_q > 0:
            raise ValueError(f"need sigma_q > 0, got {self.sigma_q}")
        sigma_p = tuple(float(s) for s in self.sigma_p)
        if len(sigma_p) != self.T:
            raise ValueError(f"sigma_p has {len(sigma_p)} entries, expected T={self.T}")
        if any(s < 0 for s in sigma_p):
            raise ValueError("sigma_p entries must be >= 0")
        object.__setattr__(self, "sigma_p", sigma_p)

    def to_dict(self) -> dict:
        return {"T": self.T, "r": self.r, "c": self.c, "alpha": self.alpha,
                "sigma_q": self.sigma_q, "sigma_p": list(self.sigma_p),
                "seed": self.seed}


@dataclass
class AgentState:
    """Agent-local view: its q segment, last projection, and working data."""

    q: np.ndarray  # (n_i,)
    z: np.ndarray  # (d,)
    X_work: np.ndarray  # (n_i, d), deflated copy after round 1

    def project(self) -> np.ndarray:
        """Step 5: z_i = X_i^T q_i (shared on the network)."""
        self.z = self.X_work.T @ self.q
        return self.z

    def update(self, z_mixed: np.ndarray, alpha: float, p: np.ndarray) -> None:
        """Step 7: q_i = alpha X_i z_i^(t+1/2) + p_i."""
        self.q = alpha * (self.X_work @ z_mixed) + p


@dataclass(frozen=True)
class RankTrace:
    """Everything one eigenvector round put on the wire, plus diagnostics.

    z (pre-consensus) and q_final are the released values: exactly
    m*d*T + n scalars.  z_half, the realized noise draws, per-iteration
    norms, and the deflation residual are simulator-side diagnostics.
    """

    z: np.ndarray  # (T, m, d) pre-consensus releases
    z_half: np.ndarray  # (T, m, d) consensus outputs
    q_final: np.ndarray  # (n,) unnormalized final iterate
    q_norms: np.ndarray  # (T + 1,) ||q^(t)|| for t = 0..T
    q0: np.ndarray  # (n,) realized init noise
    p: np.ndarray  # (T, n) realized per-iteration noise
    deflation_residual: float
    q_iterates: np.ndarray | None = None  # (T + 1, n) when recorded

    def release_vector(self) -> np.ndarray:
        """Stacked network release [z^(1) .. z^(T), q^(T)] in R^(mdT + n)."""
        return np.concatenate([self.z.reshape(-1), self.q_final])


@dataclass(frozen=True)
class RunResult:
    U_hat: np.ndarray  # (n, r), unit columns
    traces: tuple  # one RankTrace per rank
    norms: tuple  # ||q~^(T)|| per rank
    config: RunConfig
    working_blocks: tuple = ()  # per-rank deflated blocks, when recorded


def deflate(blocks: Sequence[np.ndarray], q_prev: np.ndarray,
            z_final: Sequence[np.ndarray], norm_prev: float,
            offsets: Sequence[np.ndarray]) -> list:
    """Remove the estimated direction from each agent's working block.

    X_i <- X_i - q_{i,prev} (z_i / norm_prev)^T, with q_prev the normalized
    previous estimate, z_i each agent's final consensus half-step, and
    norm_prev the pre-normalization norm (public after the final share).
    The outer product needs no private communication; residual bias from
    per-iteration noise is measured by the caller.
    """
    if not norm_prev > 0:
        raise ValueError(f"need norm_prev > 0, got {norm_prev}")
    if abs(np.linalg.norm(q_prev) - 1.0) > 1e-8:
        raise ValueError("q_prev must be unit norm")
    out = []
    for X_i, z_i, o in zip(blocks, z_final, offsets):
        q_i = q_prev[o]
        out.append(X_i - np.outer(q_i, z_i / norm_prev))
    return out


def run_ddppm(data: PartitionedDataset, top: Topology, cfg: RunConfig,
              record_iterates: bool = False,
              record_working_blocks: bool = False) -> RunResult:
    """Simulate the full multi-round algorithm, deterministically in the seed.

    Per rank l: deflation (l > 1), then T noisy consensus power iterations
    from q^(0) ~ N(0, sigma_q^2 I), then the global share of the q segments
    and normalization.  The trace records exactly what an observer on the
    network sees, plus the realized noise for release-model cross-checks.
    """
    if data.m != top.m:
        raise ValueError(f"data has m={data.m} agents but topology has m={top.m}")
    if cfg.c != top.c:
        raise ValueError(f"config c={cfg.c} disagrees with topology c={top.c}")
    if cfg.r > 1 and cfg.T < 1:
        raise ValueError("deflation needs at least one iteration: r > 1 requires T >= 1")
    m, n, d = data.m, data.n, data.d
    Wc = top.Wc()
    blocks = [b.copy() for b in data.blocks]
    offsets = data.offsets

    U_hat = np.empty((n, cfg.r))
    traces = []
    norms = []
    all_working = []
    q_prev = None
    z_last = None
    norm_last = None

    for l in range(1, cfg.r + 1):
        residual = 0.0
        if l > 1:
            blocks = deflate(blocks, q_prev, z_last, norm_last, offsets)
            proj = np.concatenate([q_prev[o] @ B for o, B in zip(offsets, blocks)])
            residual = float(np.linalg.norm(proj))
        if record_working_blocks:
            all_working.append(tuple(B.copy() for B in blocks))

        q0 = np.empty(n)
        agents = []
        for i in range(m):
            draw = substream(cfg.seed, TAG_INIT, l, i).normal(
                0.0, cfg.sigma_q, size=len(offsets[i]))
            q0[offsets[i]] = draw
            agents.append(AgentState(q=draw.copy(), z=np.zeros(d),
                                     X_work=blocks[i]))
        z_rec = np.empty((cfg.T, m, d))
        zh_rec = np.empty((cfg.T, m, d))
        p_rec = np.empty((cfg.T, n))
        q_norms = np.empty(cfg.T + 1)
        iterates = np.empty((cfg.T + 1, n)) if record_iterates else None

        def snapshot(t):
            q = np.empty(n)
            for i, a in enumerate(agents):
                q[offsets[i]] = a.q
            q_norms[t] = np.linalg.norm(q)
            if iterates is not None:
                iterates[t] = q
            return q

        snapshot(0)
        z_half = None
        for t in range(1, cfg.T + 1):
            z_t = [a.project() for a in agents]
            z_half = m * (Wc @ np.asarray(z_t))
            for i, a in enumerate(agents):
                p_i = substream(cfg.seed, TAG_ITER, l, t, i) \
                    .normal(0.0, cfg.sigma_p[t - 1], size=len(offsets[i]))
                a.update(z_half[i], cfg.alpha, p_i)
                p_rec[t - 1, offsets[i]] = p_i
            z_rec[t - 1] = z_t
            zh_rec[t - 1] = z_half
            snapshot(t)

        q_tilde = snapshot(cfg.T)  # final share: segments flood the network
        norm = float(np.linalg.norm(q_tilde))
        if norm < _DEGENERATE_NORM:
            raise FloatingPointError(f"degenerate normalization at rank l={l}: "
                                     f"||q~^(T)|| = {norm}")
        U_hat[:, l - 1] = q_tilde / norm
        traces.append(RankTrace(z=z_rec, z_half=zh_rec, q_final=q_tilde,
                                q_norms=q_norms, q0=q0, p=p_rec,
                                deflation_residual=residual,
                                q_iterates=iterates))
        norms.append(norm)
        q_prev = U_hat[:, l - 1]
        z_last = [zh_rec[-1, i] for i in range(m)] if cfg.T > 0 else None
        norm_last = norm

    return RunResult(U_hat=U_hat, traces=tuple(traces), norms=tuple(norms),
                     config=cfg, working_blocks=tuple(all_working))


def centralized_power_method(X: Dataset, T: int, r: int = 1, seed: int = 0,
                             q0: np.ndarray | None = None) -> np.ndarray:
    """Classic power iteration oracle on X X^T with per-step normalization.

    Deflation removes lambda_1 q q^T from the operator between rounds.  An
    explicit q0 pins the first round's start (engine cross-checks); later
    rounds always draw from the seeded stream.
    """
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    n = X.n
    if r < 1 or r > n:
        raise ValueError(f"need 1 <= r <= {n}, got {r}")
    B = X.X @ X.X.T
    out = np.empty((n, r))
    for l in range(1, r + 1):
        if l == 1 and q0 is not None:
            q = np.asarray(q0, dtype=float).copy()
        else:
            q = substream(seed, TAG_CENTRAL, l).normal(0.0, 1.0, size=n)
        for _ in range(T):
            w = B @ q
            norm = np.linalg.norm(w)
            if norm < _DEGENERATE_NORM:
                raise FloatingPointError(f"zero iterate norm at rank l={l}")
            q = w / norm
        lam = float(q @ B @ q)
        out[:, l - 1] = q
        B = B - lam * np.outer(q, q)
    return out


def error_metric(v: np.ndarray, q: np.ndarray) -> float:
    """sin of the principal angle: ||(I - v v^T) q|| / ||q||."""
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("reference vector v must be unit norm")
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("estimate q must be nonzero")
    return min(float(np.linalg.norm(q - v * (v @ q)) / qn), 1.0)

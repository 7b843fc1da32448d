"""Exact Gaussian release distributions and the Chernoff-Renyi delta bound.

Because the algorithm never renormalizes mid-run, everything shared on the
network over one eigenvector round is jointly Gaussian: stacking the z
releases and the final q segments gives y = M q^(0) + L P with M and L
polynomial in alpha * Xi.  Conditioning on one agent's own randomness
yields that agent's view of the rest of the network as a closed-form
Gaussian, and the privacy loss toward any adjacent dataset is bounded by
the Chernoff bound on the log-likelihood ratio, evaluated through the
closed-form Renyi divergence between Gaussians.

Rank reduction mirrors the release-dimension reduction used to keep the
divergence finite and numerically stable when covariances are (near)
rank-deficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ddppm.data import PartitionedDataset
from ddppm.engine import RunConfig, run_ddppm
from ddppm.network import NetworkOperator, Topology, build_network_operator
from ddppm.rng import TAG_PERTURB, TAG_PROBE, substream

BETA_CAP = 1e6  # search ceiling when every order keeps the pair compatible
BETA_FLOOR = 1e-3
DEFAULT_ENERGY_TOL = 1.0 - 1e-8


# ---------------------------------------------------------------------------
# Gaussian containers


@dataclass(frozen=True)
class GaussianDist:
    """Mean and covariance of a release distribution."""

    mean: np.ndarray
    cov: np.ndarray
    rank_hint: int | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean "
                             f"dimension {mean.size}")
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if cov.size and float(np.max(np.abs(cov - cov.T))) > 1e-10 * scale:
            raise ValueError("covariance is not symmetric within 1e-10")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size


def reduce_rank(g: GaussianDist, energy_tol: float) -> GaussianDist:
    """Project onto the smallest eigenspace capturing energy_tol of the trace.

    The output covariance is strictly positive definite (zero directions are
    dropped even at energy_tol = 1).
    """
    if not 0.0 < energy_tol <= 1.0:
        raise ValueError(f"energy_tol must be in (0, 1], got {energy_tol}")
    w, U = np.linalg.eigh(g.cov)
    w, U = w[::-1], U[:, ::-1]
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("zero covariance: nothing to retain")
    cum = np.cumsum(w)
    r = int(np.searchsorted(cum, energy_tol * total * (1.0 - 1e-12)) + 1)
    r = min(r, int(np.sum(w > 0)))
    Ur = U[:, :r]
    return GaussianDist(Ur.T @ g.mean, np.diag(w[:r]), rank_hint=r)


def reduce_rank_joint(p: GaussianDist, q: GaussianDist,
                      energy_tol: float) -> tuple:
    """Project a pair onto a common basis from the summed covariances.

    Returns (p', q', support_mismatch).  The mismatch flag is set when the
    dropped directions carry an appreciable mean difference but essentially
    no variance, i.e. the two distributions are (numerically) perfectly
    distinguishable there and the divergence is infinite pre-reduction.
    """
    if not 0.0 < energy_tol <= 1.0:
        raise ValueError(f"energy_tol must be in (0, 1], got {energy_tol}")
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    S = p.cov + q.cov
    w, U = np.linalg.eigh(S)
    w, U = w[::-1], U[:, ::-1]
    total = float(w.sum())
    dmu = p.mean - q.mean
    if total <= 0.0:
        return p, q, bool(np.linalg.norm(dmu) > 1e-12)
    cum = np.cumsum(w)
    r = int(np.searchsorted(cum, energy_tol * total * (1.0 - 1e-12)) + 1)
    r = min(r, int(np.sum(w > 1e-15 * w[0])))
    Ur, Udrop = U[:, :r], U[:, r:]
    mismatch = False
    if Udrop.shape[1]:
        dropped_mass = float(np.linalg.norm(Udrop.T @ dmu) ** 2)
        dropped_var = float(w[r:].sum())
        mismatch = dropped_mass > 1e-9 * max(1.0, float(dmu @ dmu)) \
            and dropped_mass > 1e6 * dropped_var
    pr = GaussianDist(Ur.T @ p.mean, Ur.T @ p.cov @ Ur, rank_hint=r)
    qr = GaussianDist(Ur.T @ q.mean, Ur.T @ q.cov @ Ur, rank_hint=r)
    return pr, qr, mismatch


# ---------------------------------------------------------------------------
# Renyi divergence and the Chernoff delta bound


class PairDivergence:
    """Closed-form Renyi divergence family for one pair of PD covariances.

    Factorizations are cached per order so sweeping over orders, epsilon
    values, or mean realizations reuses the expensive linear algebra.  For
    order beta + 1, the pair is compatible iff (beta+1) Sigma_q - beta
    Sigma_p stays positive definite, which matches positive definiteness of
    the precision combination (beta+1) Sigma_p^{-1} - beta Sigma_q^{-1}.
    """

    def __init__(self, cov_p: np.ndarray, cov_q: np.ndarray):
        cov_p = np.atleast_2d(np.asarray(cov_p, dtype=float))
        cov_q = np.atleast_2d(np.asarray(cov_q, dtype=float))
        if cov_p.shape != cov_q.shape:
            raise ValueError(f"covariance shapes differ: {cov_p.shape} vs {cov_q.shape}")
        self.cov_p, self.cov_q = cov_p, cov_q
        self.logdet_p = self._chol_logdet(cov_p, "P")
        self.logdet_q = self._chol_logdet(cov_q, "Q")
        self._cache: dict = {}
        self._beta_max: float | None = None

    @staticmethod
    def _chol_logdet(cov, name):
        try:
            c, _ = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError(f"covariance of {name} is not positive definite; "
                             "rank-reduce first") from None
        return 2.0 * float(np.sum(np.log(np.diag(c))))

    def _factor(self, beta: float):
        cached = self._cache.get(beta)
        if cached is not None:
            return cached
        mix = (beta + 1.0) * self.cov_q - beta * self.cov_p
        try:
            factor = cho_factor(mix, lower=True)
            logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
            entry = (factor, logdet)
        except np.linalg.LinAlgError:
            entry = None
        self._cache[beta] = entry
        return entry

    def compatible(self, beta: float) -> bool:
        return self._factor(beta) is not None

    def beta_max(self) -> float:
        """Largest order parameter keeping the pair compatible (binary search)."""
        if self._beta_max is not None:
            return self._beta_max
        lo = BETA_FLOOR
        if not self.compatible(lo):
            lo = 1e-9
            if not self.compatible(lo):
                self._beta_max = lo
                return lo
        hi = lo
        while hi < BETA_CAP and self.compatible(hi * 2.0):
            hi *= 2.0
        if hi * 2.0 > BETA_CAP and self.compatible(BETA_CAP):
            self._beta_max = BETA_CAP
            return BETA_CAP
        lo_ok, hi_bad = hi, hi * 2.0
        for _ in range(200):
            mid = 0.5 * (lo_ok + hi_bad)
            if self.compatible(mid):
                lo_ok = mid
            else:
                hi_bad = mid
            if hi_bad - lo_ok <= 1e-12 * lo_ok:
                break
        self._beta_max = lo_ok
        return lo_ok

    def divergence(self, beta: float, dmu: np.ndarray) -> float:
        """Renyi divergence of order beta + 1 with mean difference dmu."""
        if not beta > 0:
            raise ValueError(f"order must exceed 1, got beta={beta}")
        entry = self._factor(beta)
        if entry is None:
            return math.inf
        factor, logdet_mix = entry
        dmu = np.atleast_1d(np.asarray(dmu, dtype=float))
        quad = 0.5 * (beta + 1.0) * float(dmu @ cho_solve(factor, dmu))
        logterm = -(logdet_mix + beta * self.logdet_p
                    - (beta + 1.0) * self.logdet_q) / (2.0 * beta)
        return max(quad + logterm, 0.0)

    def log_delta(self, beta: float, dmu: np.ndarray, epsilon: float) -> float:
        div = self.divergence(beta, dmu)
        if math.isinf(div):
            return math.inf
        return beta * (div - epsilon)

    def delta(self, dmu: np.ndarray, epsilon: float,
              refine: bool = True) -> tuple:
        """min over orders of exp(-beta eps + beta D_{beta+1}), with argmin.

        A 32-point log grid seeds a golden-section refinement (relative 1e-6
        in beta); the objective is clamped into [0, 1].  Returns (delta,
        beta_star); an everywhere-infinite divergence yields (1.0, nan).
        """
        if not epsilon > 0:
            raise ValueError(f"need epsilon > 0, got {epsilon}")
        bmax = self.beta_max()
        hi = bmax * (1.0 - 1e-9)
        lo = min(BETA_FLOOR, hi / 10.0)
        grid = np.geomspace(lo, hi, 32)
        values = [self.log_delta(b, dmu, epsilon) for b in grid]
        best = int(np.argmin(values))
        if math.isinf(values[best]):
            return 1.0, math.nan
        if refine:
            a = grid[max(best - 1, 0)]
            b = grid[min(best + 1, len(grid) - 1)]
            beta_star, log_d = self._golden(math.log(a), math.log(b), dmu, epsilon)
            if log_d > values[best]:
                beta_star, log_d = grid[best], values[best]
        else:
            beta_star, log_d = grid[best], values[best]
        return min(math.exp(min(log_d, 0.0)), 1.0), float(beta_star)

    def _golden(self, la: float, lb: float, dmu, epsilon) -> tuple:
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        h = lb - la
        x1, x2 = la + (1 - invphi) * h, la + invphi * h
        f1 = self.log_delta(math.exp(x1), dmu, epsilon)
        f2 = self.log_delta(math.exp(x2), dmu, epsilon)
        while h > 1e-6:
            if f1 <= f2:
                lb, x2, f2 = x2, x1, f1
                h = lb - la
                x1 = la + (1 - invphi) * h
                f1 = self.log_delta(math.exp(x1), dmu, epsilon)
            else:
                la, x1, f1 = x1, x2, f2
                h = lb - la
                x2 = la + invphi * h
                f2 = self.log_delta(math.exp(x2), dmu, epsilon)
        x = x1 if f1 <= f2 else x2
        return math.exp(x), min(f1, f2)


def renyi_divergence_gaussian(P: GaussianDist, Q: GaussianDist,
                              order: float) -> float:
    """Closed-form Renyi divergence of the given order (> 1) between P and Q.

    Both covariances must be positive definite (apply :func:`reduce_rank`
    jointly beforehand); an incompatible order returns +inf.
    """
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    if not order > 1.0:
        raise ValueError(f"order must exceed 1, got {order}")
    pair = PairDivergence(P.cov, Q.cov)
    return pair.divergence(order - 1.0, P.mean - Q.mean)


def delta_bound(P: GaussianDist, Q: GaussianDist, epsilon: float) -> tuple:
    """Chernoff bound on Pr[log-likelihood ratio > epsilon]: (delta, beta_star)."""
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    pair = PairDivergence(P.cov, Q.cov)
    return pair.delta(P.mean - Q.mean, epsilon)


# ---------------------------------------------------------------------------
# The release model


@dataclass(frozen=True)
class ReleaseModel:
    """Linear model of one round's network release: y = M q^(0) + L P.

    Rows stack the T pre-consensus z releases (agent-major within each
    iteration block) followed by the n final q segments; q^(0) has
    covariance sigma_q^2 I and P stacks the T per-iteration noise vectors
    with covariance diag(sigma_p(t)^2) kron I_n.
    """

    M: np.ndarray  # (m d T + n, n)
    L: np.ndarray  # (m d T + n, n T)
    sigma_q: float
    sigma_p: tuple
    offsets: tuple
    m: int
    d: int
    n: int
    T: int

    @property
    def release_dim(self) -> int:
        return self.m * self.d * self.T + self.n

    def predict(self, q0: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Evaluate y at realized noise (p given as (T, n) or flat (nT,))."""
        p_flat = np.asarray(p, dtype=float).reshape(-1)
        if self.T == 0:
            return self.M @ q0
        return self.M @ q0 + self.L @ p_flat

    def observer_rows(self, i: int) -> np.ndarray:
        """Row indices of agent i's own releases (dT + n_i of them)."""
        z_rows = [np.arange(self.d) + (t * self.m + i) * self.d
                  for t in range(self.T)]
        q_rows = self.m * self.d * self.T + np.asarray(self.offsets[i])
        return np.concatenate(z_rows + [q_rows]).astype(int)

    def own_q_cols(self, i: int) -> np.ndarray:
        return np.asarray(self.offsets[i], dtype=int)

    def own_p_cols(self, i: int) -> np.ndarray:
        own = np.asarray(self.offsets[i], dtype=int)
        return np.concatenate([t * self.n + own for t in range(self.T)]) \
            if self.T else np.empty(0, dtype=int)


def build_release_model(data: PartitionedDataset, op: NetworkOperator,
                        cfg: RunConfig) -> ReleaseModel:
    """Assemble M and L for a rank-1 round on the given (working) blocks.

    Powers of alpha Xi are taken in the eigenbasis of Xi, so the build costs
    one dense eigendecomposition plus small products.  Block t of M is
    D(X)^T (alpha Xi)^(t-1) for t <= T and (alpha Xi)^T for the final q
    block; L sums the per-iteration noise with strictly lower-triangular
    block structure (its first block row is zero).
    """
    if cfg.r != 1:
        raise ValueError("the release model covers one eigenvector round; "
                         f"got r={cfg.r} (audit rounds separately)")
    if data.m != op.m:
        raise ValueError(f"data has m={data.m} agents but operator has m={op.m}")
    m, n, d, T = data.m, data.n, data.d, cfg.T
    mu, U = op.mu, op.basis
    amu = cfg.alpha * mu
    # D(X)^T: block row i holds X_i^T in agent i's global columns.
    Dt = np.zeros((m * d, n))
    for i, (blk, o) in enumerate(zip(data.blocks, data.offsets)):
        Dt[i * d:(i + 1) * d, o] = blk.T
    DtU = Dt @ U

    M = np.empty((m * d * T + n, n))
    for t in range(1, T + 1):
        M[(t - 1) * m * d:t * m * d] = (DtU * amu ** (t - 1)) @ U.T
    M[m * d * T:] = (U * amu ** T) @ U.T

    L = np.zeros((m * d * T + n, n * T))
    if T > 0:
        z_pow = [(DtU * amu ** e) @ U.T for e in range(max(T - 1, 0))]
        for t in range(2, T + 1):
            rows = slice((t - 1) * m * d, t * m * d)
            for k in range(1, t):
                L[rows, (k - 1) * n:k * n] = z_pow[t - 1 - k]
        for k in range(1, T + 1):
            L[m * d * T:, (k - 1) * n:k * n] = (U * amu ** (T - k)) @ U.T
    return ReleaseModel(M=M, L=L, sigma_q=cfg.sigma_q, sigma_p=cfg.sigma_p,
                        offsets=data.offsets, m=m, d=d, n=n, T=T)


def canonical_realization(model: ReleaseModel, i: int) -> tuple:
    """Deterministic probe for the observer's own randomness.

    q_i^(0) is the all-ones direction scaled to the typical draw magnitude
    sigma_q; the per-iteration noise probe is zero.
    """
    n_i = len(model.offsets[i])
    q_i = model.sigma_q * np.ones(n_i) / math.sqrt(n_i)
    p_i = np.zeros(model.T * n_i)
    return q_i, p_i


class ObserverView:
    """Agent i's slice of a release model, split into own vs received parts.

    The conditional covariance (from the other agents' randomness) is
    realization-independent and computed once; conditional means at any
    realization of the observer's own randomness are cheap matvecs.
    """

    def __init__(self, model: ReleaseModel, i: int):
        if not 0 <= i < model.m:
            raise ValueError(f"observer {i} out of range for m={model.m}")
        rows = model.observer_rows(i)
        own_q = model.own_q_cols(i)
        own_p = model.own_p_cols(i)
        other_q = np.setdiff1d(np.arange(model.n), own_q)
        M_i = model.M[rows]
        L_i = model.L[rows]
        self.M_own = M_i[:, own_q]
        self.L_own = L_i[:, own_p] if model.T else np.zeros((len(rows), 0))
        M_other = M_i[:, other_q]
        cov = (model.sigma_q ** 2) * (M_other @ M_other.T)
        for t in range(model.T):
            cols = t * model.n + other_q
            Lt = L_i[:, cols]
            cov += (model.sigma_p[t] ** 2) * (Lt @ Lt.T)
        self.cov = 0.5 * (cov + cov.T)

    def mean(self, q_i: np.ndarray, p_i: np.ndarray) -> np.ndarray:
        q_i = np.asarray(q_i, dtype=float)
        p_i = np.asarray(p_i, dtype=float).reshape(-1)
        out = self.M_own @ q_i
        if self.L_own.shape[1]:
            out = out + self.L_own @ p_i
        return out


def observer_conditional(model: ReleaseModel, i: int,
                         q_i: np.ndarray | None = None,
                         p_i: np.ndarray | None = None) -> GaussianDist:
    """Law of agent i's stacked releases given its own randomness.

    Mean: M_i^u q_i^(0) + L_i^u P_i at the supplied realization (canonical
    probe when omitted).  Covariance: the contribution of every other
    agent's initialization and iteration noise.  With m = 1 there is no
    unknown randomness and the covariance is exactly zero.
    """
    view = ObserverView(model, i)
    if q_i is None or p_i is None:
        cq, cp = canonical_realization(model, i)
        q_i = cq if q_i is None else q_i
        p_i = cp if p_i is None else p_i
    return GaussianDist(view.mean(q_i, p_i), view.cov)


# ---------------------------------------------------------------------------
# Perturbations (adjacent datasets)


@dataclass(frozen=True)
class Perturbation:
    """One adjacent-dataset move: a unit-capped shift of one local row."""

    agent: int
    row: int
    direction: np.ndarray
    magnitude: float
    label: str

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(direction)
        if norm == 0 and self.magnitude != 0.0:
            raise ValueError(f"perturbation {self.label!r} has a zero direction")
        object.__setattr__(self, "direction",
                           direction / norm if norm else direction)
        if not 0.0 <= self.magnitude <= 1.0 + 1e-12:
            raise ValueError(f"perturbation {self.label!r} violates the "
                             f"adjacency norm: magnitude {self.magnitude}")

    def apply(self, data: PartitionedDataset) -> PartitionedDataset:
        old = data.blocks[self.agent][self.row]
        return data.replace_row(self.agent, self.row,
                                old + self.magnitude * self.direction)


def ball_capped_step(row: np.ndarray, direction: np.ndarray) -> float:
    """Largest step (up to 1) along a unit direction keeping the row inside
    the unit ball.

    Adjacent datasets must stay in the mechanism's domain: rows live within
    the unit ball, and single-row changes are capped at distance 1.
    """
    x = np.asarray(row, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    b = float(x @ u)
    disc = b * b + 1.0 - float(x @ x)
    if disc <= 0.0:
        return 0.0
    return min(1.0, -b + math.sqrt(disc))


def default_perturbations(data: PartitionedDataset, seed: int = 0,
                          rows_per_agent: int | None = None,
                          n_random: int = 4) -> list:
    """Spanning set of adjacent moves per row: +-row direction, +-top-2
    right singular directions, plus random unit directions, each capped so
    the changed row stays inside the unit ball.

    The audited delta is a certificate over exactly this (user-extensible)
    set.  rows_per_agent caps the audit to each agent's largest-norm rows.
    """
    X = data.stacked()
    d = data.d
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    top_dirs = [Vt[k] for k in range(min(2, Vt.shape[0]))]
    out = []
    for j, block in enumerate(data.blocks):
        norms = np.linalg.norm(block, axis=1)
        rows = np.argsort(norms)[::-1]
        if rows_per_agent is not None:
            rows = rows[:rows_per_agent]
        for k in sorted(int(r) for r in rows):
            row = block[k]
            dirs = []
            if np.linalg.norm(row) > 0:
                dirs.append(("row", row))
            for s, v in enumerate(top_dirs):
                dirs.append((f"sv{s + 1}", v))
            rng = substream(seed, TAG_PERTURB, j, k)
            for s in range(n_random):
                v = rng.normal(size=d)
                dirs.append((f"rnd{s + 1}", v))
            for name, v in dirs:
                for sign, tag in ((1.0, "+"), (-1.0, "-")):
                    if name.startswith("rnd") and sign < 0:
                        continue  # random directions are sign-symmetric
                    u = sign * np.asarray(v, dtype=float)
                    step = ball_capped_step(row, u)
                    if step <= 1e-9:
                        continue
                    out.append(Perturbation(agent=j, row=k, direction=u,
                                            magnitude=step,
                                            label=f"a{j}r{k}{tag}{name}"))
    return out


def load_perturbations(path: str) -> list:
    """Read a perturbation set from text: agent,row,v1,...,vd,magnitude."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 4:
                raise ValueError(f"{path}: line {lineno}: expected "
                                 "agent,row,direction...,magnitude")
            agent, row = int(parts[0]), int(parts[1])
            magnitude = float(parts[-1])
            direction = np.asarray([float(x) for x in parts[2:-1]])
            out.append(Perturbation(agent=agent, row=row, direction=direction,
                                    magnitude=magnitude,
                                    label=f"file:{lineno}"))
    return out


# ---------------------------------------------------------------------------
# The audit


@dataclass(frozen=True)
class ObserverDelta:
    agent: int
    delta: float
    beta_star: float
    perturbation_id: str


@dataclass(frozen=True)
class PrivacyReport:
    """Per-observer delta certificates at one epsilon."""

    epsilon: float
    per_observer: tuple
    delta: float
    beta_star: float
    perturbation_id: str
    diagnostics: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "beta_star": self.beta_star,
            "perturbation_id": self.perturbation_id,
            "per_observer": [
                {"agent": o.agent, "delta": o.delta, "beta_star": o.beta_star,
                 "perturbation_id": o.perturbation_id}
                for o in self.per_observer
            ],
            "diagnostics": list(self.diagnostics),
        }


class _RoundAudit:
    """Divergence curves for one eigenvector round of one perturbation.

    Precomputes the jointly reduced covariance pair for one observer and
    the mean difference per realization of the observer's own randomness,
    so delta evaluation at any epsilon is a cheap one-dimensional search.
    """

    def __init__(self, base_view: ObserverView, pert_view: ObserverView,
                 realizations: list, energy_tol: float):
        self.diag = None
        self.mismatch = False
        dmus = [base_view.mean(q_i, p_i) - pert_view.mean(q_i, p_i)
                for q_i, p_i in realizations]
        cov_p, cov_q = base_view.cov, pert_view.cov
        if float(np.trace(cov_p)) <= 0.0 or float(np.trace(cov_q)) <= 0.0:
            # No unknown randomness (e.g. a single-agent network): any mean
            # difference is perfectly distinguishable.
            sep = max(np.linalg.norm(dmu) for dmu in dmus)
            self.degenerate_delta = 1.0 if sep > 1e-12 else 0.0
            self.diag = "degenerate covariance (no unknown randomness)"
            self.pair = None
            return
        self.degenerate_delta = None
        w, U = np.linalg.eigh(cov_p + cov_q)
        w, U = w[::-1], U[:, ::-1]
        total = float(w.sum())
        cum = np.cumsum(w)
        r = int(np.searchsorted(cum, energy_tol * total * (1.0 - 1e-12)) + 1)
        r = min(r, int(np.sum(w > 1e-15 * w[0])))
        Ur, wdrop = U[:, :r], w[r:]
        for dmu in dmus:
            dropped_mass = float(dmu @ dmu) - float(np.linalg.norm(Ur.T @ dmu) ** 2)
            if dropped_mass > 1e-9 * max(1.0, float(dmu @ dmu)) \
                    and dropped_mass > 1e6 * float(wdrop.sum()):
                self.mismatch = True
                self.diag = "support mismatch before rank reduction"
                break
        try:
            self.pair = PairDivergence(Ur.T @ cov_p @ Ur, Ur.T @ cov_q @ Ur)
        except ValueError:
            # One side is singular on a retained direction: the laws are
            # mutually non-dominating there, so the divergence is infinite.
            self.pair = None
            self.mismatch = True
            self.diag = "reduced covariance pair not positive definite"
        self.dmus = [Ur.T @ dmu for dmu in dmus]

    def delta(self, epsilon: float) -> tuple:
        """(delta, beta_star) maximized over realizations."""
        if self.degenerate_delta is not None:
            return self.degenerate_delta, math.nan
        if self.mismatch:
            return 1.0, math.nan
        coarse = [self.pair.delta(dmu, epsilon, refine=False)
                  for dmu in self.dmus]
        worst = int(np.argmax([c[0] for c in coarse]))
        refined = self.pair.delta(self.dmus[worst], epsilon, refine=True)
        return max(coarse[worst], refined, key=lambda t: t[0])


def audit_privacy(data: PartitionedDataset, top: Topology, cfg: RunConfig,
                  epsilon, perturbations: list | None = None,
                  energy_tol: float = DEFAULT_ENERGY_TOL,
                  n_realizations: int = 8,
                  compose: str | None = None) -> "PrivacyReport | list":
    """Bound every observer's privacy loss over an adjacency set.

    For each observer i and each perturbation of another agent's row, the
    conditional release laws under X and X' are built, jointly rank-reduced,
    and fed to the Chernoff-Renyi bound; delta_i is the maximum over the
    searched set (a lower-bound certificate on the true supremum).  The
    conditional means are evaluated at the canonical probe plus
    n_realizations random draws of the observer's own randomness, taking
    the worst case.

    epsilon may be a scalar or a list; a list returns one report per value
    (the expensive model builds are shared).  Multi-rank configurations
    compose per-round releases: "stacked" sums the per-round divergence
    curves inside one Chernoff bound (the rounds' randomness is
    independent), "naive-sum" splits epsilon equally across rounds and adds
    the per-round deltas.  Default: stacked for r <= 2, naive-sum otherwise.
    """
    epsilons = np.atleast_1d(np.asarray(epsilon, dtype=float))
    if np.any(epsilons <= 0):
        raise ValueError("epsilon values must be positive")
    if compose is None:
        compose = "stacked" if cfg.r <= 2 else "naive-sum"
    if compose not in ("stacked", "naive-sum"):
        raise ValueError(f"unknown compose mode {compose!r}")
    if perturbations is None:
        perturbations = default_perturbations(data, seed=cfg.seed)
    for p in perturbations:
        if not 0 <= p.agent < data.m:
            raise ValueError(f"perturbation {p.label!r} targets agent {p.agent}")
        if p.magnitude > 1.0 + 1e-12:
            raise ValueError(f"perturbation {p.label!r} violates adjacency")

    round_blocks = _per_round_blocks(data, top, cfg)
    round_cfg = RunConfig(T=cfg.T, r=1, c=cfg.c, alpha=cfg.alpha,
                          sigma_q=cfg.sigma_q, sigma_p=cfg.sigma_p,
                          seed=cfg.seed)
    base_models = [build_release_model(blk, build_network_operator(blk, top),
                                       round_cfg) for blk in round_blocks]
    base_views = {(l, i): ObserverView(base_models[l], i)
                  for l in range(cfg.r) for i in range(data.m)}

    realizations = {}
    for i in range(data.m):
        n_i = len(data.offsets[i])
        reals = [canonical_realization(base_models[0], i)]
        for rep in range(n_realizations):
            rng = substream(cfg.seed, TAG_PROBE, i, rep)
            q_i = rng.normal(0.0, cfg.sigma_q, size=n_i)
            p_i = np.concatenate([rng.normal(0.0, s, size=n_i)
                                  for s in cfg.sigma_p]) if cfg.T else np.zeros(0)
            reals.append((q_i, p_i))
        realizations[i] = reals

    diagnostics = []
    if cfg.T > 0 and any(s == 0.0 for s in cfg.sigma_p):
        diagnostics.append("sigma_p contains zeros: conditional covariances "
                           "may be singular (ablation run)")
    # audits[(pert_idx, observer)] -> list of per-round _RoundAudit
    audits = {}
    for pi, pert in enumerate(perturbations):
        pert_blocks = _per_round_blocks(pert.apply(data), top, cfg)
        pert_models = [build_release_model(blk, build_network_operator(blk, top),
                                           round_cfg) for blk in pert_blocks]
        for i in range(data.m):
            if i == pert.agent:
                continue  # own-row changes are outside the threat model
            rounds = [
                _RoundAudit(base_views[(l, i)], ObserverView(pert_models[l], i),
                            realizations[i], energy_tol)
                for l in range(cfg.r)
            ]
            audits[(pi, i)] = rounds
            for ra in rounds:
                if ra.diag:
                    diagnostics.append(f"{pert.label}/observer{i}: {ra.diag}")

    reports = []
    for eps in epsilons:
        per_observer = []
        for i in range(data.m):
            best = ObserverDelta(agent=i, delta=0.0, beta_star=math.nan,
                                 perturbation_id="none")
            for pi, pert in enumerate(perturbations):
                if (pi, i) not in audits:
                    continue
                d_val, b_star = _compose_delta(audits[(pi, i)], eps, compose)
                if d_val > best.delta:
                    best = ObserverDelta(agent=i, delta=d_val, beta_star=b_star,
                                         perturbation_id=pert.label)
            per_observer.append(best)
        worst = max(per_observer, key=lambda o: o.delta)
        reports.append(PrivacyReport(
            epsilon=float(eps), per_observer=tuple(per_observer),
            delta=worst.delta, beta_star=worst.beta_star,
            perturbation_id=worst.perturbation_id,
            diagnostics=tuple(sorted(set(diagnostics)))))
    return reports[0] if np.isscalar(epsilon) else reports


def _compose_delta(rounds: list, epsilon: float, compose: str) -> tuple:
    if len(rounds) == 1:
        return rounds[0].delta(epsilon)
    if compose == "naive-sum":
        eps_each = epsilon / len(rounds)
        deltas, betas = zip(*(ra.delta(eps_each) for ra in rounds))
        return min(sum(deltas), 1.0), betas[int(np.argmax(deltas))]
    # stacked: independent rounds make the joint divergence the sum of the
    # per-round divergences at a common order.
    if any(ra.degenerate_delta is not None or ra.mismatch for ra in rounds):
        deltas = [ra.delta(epsilon)[0] for ra in rounds]
        return max(deltas), math.nan
    bmax = min(ra.pair.beta_max() for ra in rounds)
    hi = bmax * (1.0 - 1e-9)
    lo = min(BETA_FLOOR, hi / 10.0)
    grid = np.geomspace(lo, hi, 48)
    best_log, best_beta = math.inf, math.nan

    def joint_log_delta(beta):
        total = 0.0
        for ra in rounds:
            div = max(ra.pair.divergence(beta, dmu) for dmu in ra.dmus)
            if math.isinf(div):
                return math.inf
            total += div
        return beta * (total - epsilon)

    for b in grid:
        val = joint_log_delta(b)
        if val < best_log:
            best_log, best_beta = val, b
    if math.isinf(best_log):
        return 1.0, math.nan
    return min(math.exp(min(best_log, 0.0)), 1.0), float(best_beta)


def _per_round_blocks(data: PartitionedDataset, top: Topology,
                      cfg: RunConfig) -> list:
    """Working blocks per rank round (deflation realized at cfg.seed)."""
    if cfg.r == 1:
        return [data]
    result = run_ddppm(data, top, cfg, record_working_blocks=True)
    return [PartitionedDataset(blocks, data.offsets)
            for blocks in result.working_blocks]

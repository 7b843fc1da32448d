"""Experiment orchestration shared by the CLI subcommands.

Wires the data pipeline (CSV, optional centering, unit-ball normalization,
partitioning) to the simulator, auditor, bound evaluator, and LDP baseline,
and implements the sweep protocol: initialize parameters from the
admissible-interval suggestion, optionally grid-search nearby values
(noise scale, alpha, iterations around the noiseless-convergence count),
and keep the per-epsilon error minimizer among the candidates whose
audited delta fits the cap.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from ddppm import __version__
from ddppm.analysis import convergence_bound, suggest_parameters
from ddppm.baseline import LdpConfig, ldp_estimate, ldp_perturb
from ddppm.data import (PartitionedDataset, center_rows, load_csv,
                        normalize_unit_ball, partition_rows)
from ddppm.engine import (RunConfig, error_metric, geometric_schedule,
                          run_ddppm)
from ddppm.network import (Topology, build_network_operator, complete_mixing,
                           path_mixing, ring_mixing)
from ddppm.privacy import audit_privacy, default_perturbations, load_perturbations
from ddppm.rng import TAG_TRIAL, child_seed
from ddppm.serialize import config_digest

DEFAULT_EPSILONS = (1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0)
T_STAR_TARGET = 1e-3


class ConfigError(Exception):
    """Unusable configuration or unparseable input (usage-class failure)."""


@dataclass
class ExperimentConfig:
    """Everything a CLI invocation needs, loadable from YAML key-values.

    CLI flags override file values.  'auto' entries resolve against the
    network operator's spectrum: alpha to the admissible midpoint, sigma_q
    to 1/sqrt(n), T to the noiseless iteration count reaching 1e-3 error.
    """

    dataset: str = ""
    has_header: bool = False
    columns: list | None = None
    center: bool = False
    topology: str = "ring(4)"
    c: int = 8
    T: object = "auto"
    r: int = 1
    alpha: object = "auto"
    sigma_q: object = "auto"
    eta: float = 1.0
    seed: int = 0
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    delta_caps: list | None = None
    trials: int = 100
    trials_select: int = 16
    t_max: int = 15
    t_star_cap: int = 60
    fig3_epsilon: float = 5.0
    gamma: float = 0.1
    energy_tol: float = 1.0 - 1e-8
    perturbation_file: str | None = None
    audit_rows_per_agent: int | None = 2
    audit_random_dirs: int = 2
    audit_realizations: int = 8
    refine: bool = False
    grid_eta: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0])
    grid_alpha_scale: list = field(default_factory=lambda: [0.9, 1.0, 1.1])
    # privacy feasibility often sits well below the noiseless-convergence
    # iteration count, so the T grid reaches further down than up
    grid_t_offsets: list = field(
        default_factory=lambda: [-6, -5, -4, -3, -2, -1, 0, 2, 4])
    compose: str | None = None
    jobs: int = 1
    out: str = "out"

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a key-value document")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def override(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def validate(self) -> None:
        if not self.dataset:
            raise ConfigError("no dataset configured")
        if not Path(self.dataset).exists():
            raise ConfigError(f"dataset file not found: {self.dataset}")
        if not self.epsilons:
            raise ConfigError("epsilon schedule is empty")
        if self.delta_caps is not None and len(self.delta_caps) != len(self.epsilons):
            raise ConfigError("delta_caps must align with epsilons")
        if self.trials < 1:
            raise ConfigError(f"need trials >= 1, got {self.trials}")
        if self.perturbation_file and not Path(self.perturbation_file).exists():
            raise ConfigError(f"perturbation file not found: "
                              f"{self.perturbation_file}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def digest(self) -> str:
        return config_digest(self.to_dict())


_GENERATOR_RE = re.compile(r"^(ring|complete|path)\(([^)]*)\)$")


def parse_topology_spec(spec: str, c: int) -> Topology:
    """Build a topology from 'ring(m[,w])' / 'complete(m)' / 'path(m)' or a
    square CSV file of mixing weights."""
    spec = spec.strip()
    match = _GENERATOR_RE.match(spec)
    if match:
        name, arg_text = match.groups()
        try:
            args = [a.strip() for a in arg_text.split(",") if a.strip()]
            m = int(args[0])
            if name == "ring":
                w = float(args[1]) if len(args) > 1 else 0.5
                W = ring_mixing(m, w)
            elif name == "complete":
                W = complete_mixing(m)
            else:
                W = path_mixing(m)
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad topology generator {spec!r}: {exc}") from None
        return Topology.create(W, c)
    if not Path(spec).exists():
        raise ConfigError(f"topology {spec!r} is neither a generator nor a file")
    raw = load_csv(spec)
    if raw.n != raw.d:
        raise ConfigError(f"mixing matrix file {spec} is {raw.n}x{raw.d}, "
                          "expected square")
    return Topology.create(raw.rows, c)


@dataclass(frozen=True)
class Workbench:
    """Resolved experiment state shared by the subcommands."""

    config: ExperimentConfig
    data: PartitionedDataset
    top: Topology
    op: object
    run_config: RunConfig
    reference: np.ndarray  # exact left singular vectors (dense SVD)
    t_star: int


def load_dataset(cfg: ExperimentConfig, m: int) -> PartitionedDataset:
    raw = load_csv(cfg.dataset, cfg.has_header, cfg.columns)
    if cfg.center:
        raw = center_rows(raw)
    return partition_rows(normalize_unit_ball(raw), m)


def noiseless_t_star(data, top, alpha, sigma_q, reference, cap=60,
                     seed=0) -> int:
    """Iterations the noiseless run needs to reach 1e-3 principal error."""
    cfg = RunConfig(T=cap, r=1, c=top.c, alpha=alpha, sigma_q=sigma_q,
                    sigma_p=tuple([0.0] * cap), seed=seed)
    res = run_ddppm(data, top, cfg, record_iterates=True)
    v = reference[:, 0]
    for t in range(1, cap + 1):
        if error_metric(v, res.traces[0].q_iterates[t]) <= T_STAR_TARGET:
            return t
    return cap


def build_workbench(cfg: ExperimentConfig) -> Workbench:
    cfg.validate()
    top = parse_topology_spec(cfg.topology, cfg.c)
    data = load_dataset(cfg, top.m)
    op = build_network_operator(data, top)
    mu1, mu2 = float(op.mu[0]), float(op.mu[1])
    suggestion = suggest_parameters(mu1, mu2, data.n, 0)
    alpha = suggestion.alpha if cfg.alpha == "auto" else float(cfg.alpha)
    sigma_q = suggestion.sigma_q if cfg.sigma_q == "auto" else float(cfg.sigma_q)
    reference, _, _ = np.linalg.svd(data.stacked(), full_matrices=False)
    t_star = noiseless_t_star(data, top, alpha, sigma_q, reference,
                              cap=cfg.t_star_cap, seed=cfg.seed)
    T = t_star if cfg.T == "auto" else int(cfg.T)
    run_config = RunConfig(
        T=T, r=cfg.r, c=cfg.c, alpha=alpha, sigma_q=sigma_q,
        sigma_p=geometric_schedule(T, mu2 / mu1 if mu2 > 0 else 0.0, cfg.eta),
        seed=cfg.seed)
    return Workbench(config=cfg, data=data, top=top, op=op,
                     run_config=run_config, reference=reference, t_star=t_star)


# ---------------------------------------------------------------------------
# Monte-Carlo trials (parallelizable across disjoint substreams)


def _ddppm_trial_chunk(args) -> list:
    blocks, offsets, W, c, cfg_dict, v, seeds = args
    data = PartitionedDataset(tuple(blocks), tuple(offsets))
    top = Topology.create(np.asarray(W), c)
    errs = []
    for seed in seeds:
        cfg = RunConfig(**{**cfg_dict, "seed": seed})
        res = run_ddppm(data, top, cfg)
        errs.append(error_metric(v, res.U_hat[:, 0]))
    return errs


def _ldp_trial_chunk(args) -> list:
    blocks, offsets, epsilon, delta, v, seeds = args
    data = PartitionedDataset(tuple(blocks), tuple(offsets))
    errs = []
    for seed in seeds:
        noisy = ldp_perturb(data, LdpConfig(epsilon=epsilon, delta=delta,
                                            seed=seed))
        errs.append(error_metric(v, ldp_estimate(noisy, 1)[:, 0]))
    return errs


def _run_chunks(worker, common, seeds, jobs):
    n_chunks = max(1, min(jobs, len(seeds)))
    size = math.ceil(len(seeds) / n_chunks)
    chunks = [seeds[i:i + size] for i in range(0, len(seeds), size)]
    tasks = [common + (chunk,) for chunk in chunks if chunk]
    if jobs <= 1 or len(tasks) == 1:
        results = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, tasks))
    return [e for chunk in results for e in chunk]


def ddppm_errors(bench: Workbench, run_config: RunConfig, trials: int) -> list:
    seeds = [child_seed(run_config.seed, TAG_TRIAL, k) for k in range(trials)]
    cfg_dict = run_config.to_dict()
    del cfg_dict["seed"]
    common = (list(bench.data.blocks), list(bench.data.offsets),
              bench.top.W, bench.top.c, cfg_dict, bench.reference[:, 0])
    return _run_chunks(_ddppm_trial_chunk, common, seeds, bench.config.jobs)


def ldp_errors(bench: Workbench, epsilon: float, delta: float,
               trials: int) -> list:
    seeds = [child_seed(bench.config.seed, TAG_TRIAL, k) for k in range(trials)]
    common = (list(bench.data.blocks), list(bench.data.offsets),
              epsilon, delta, bench.reference[:, 0])
    return _run_chunks(_ldp_trial_chunk, common, seeds, bench.config.jobs)


# ---------------------------------------------------------------------------
# Audits


def audit_perturbations(bench: Workbench) -> list:
    cfg = bench.config
    if cfg.perturbation_file:
        return load_perturbations(cfg.perturbation_file)
    return default_perturbations(bench.data, seed=cfg.seed,
                                 rows_per_agent=cfg.audit_rows_per_agent,
                                 n_random=cfg.audit_random_dirs)


def audit_deltas(bench: Workbench, run_config: RunConfig,
                 epsilons: list) -> list:
    """One privacy report per epsilon (models shared across the schedule)."""
    reports = audit_privacy(bench.data, bench.top, run_config,
                            list(epsilons),
                            perturbations=audit_perturbations(bench),
                            energy_tol=bench.config.energy_tol,
                            n_realizations=bench.config.audit_realizations,
                            compose=bench.config.compose)
    return reports if isinstance(reports, list) else [reports]


# ---------------------------------------------------------------------------
# The sweep protocol


@dataclass(frozen=True)
class SweepRow:
    method: str
    epsilon: float
    delta_cap: float
    mean_sin_error: float
    std_sin_error: float
    trials: int
    status: str
    delta_audited: float
    T: int
    eta: float
    alpha: float

    def as_list(self) -> list:
        return [self.method, self.epsilon, self.delta_cap,
                self.mean_sin_error, self.std_sin_error, self.trials,
                self.status, self.delta_audited, self.T, self.eta, self.alpha]


SWEEP_HEADER = ["method", "epsilon", "delta_cap", "mean_sin_error",
                "std_sin_error", "trials", "status", "delta_audited", "T",
                "eta", "alpha"]


def _grid_candidates(bench: Workbench) -> list:
    cfg = bench.config
    base_alpha = bench.run_config.alpha
    base_T = bench.run_config.T
    if not cfg.refine:
        return [(cfg.eta, base_alpha, base_T)]
    out = []
    for eta in cfg.grid_eta:
        for scale in cfg.grid_alpha_scale:
            for off in cfg.grid_t_offsets:
                T = max(1, base_T + int(off))
                out.append((float(eta), base_alpha * float(scale), T))
    return sorted(set(out))


def run_sweep(bench: Workbench) -> list:
    """One CSV row per (method, epsilon), minimizing error under the cap."""
    cfg = bench.config
    if cfg.delta_caps is None:
        raise ConfigError("sweep needs delta_caps aligned with epsilons")
    epsilons = [float(e) for e in cfg.epsilons]
    caps = [float(d) for d in cfg.delta_caps]
    mu2_over_mu1 = float(bench.op.mu[1] / bench.op.mu[0])

    candidates = []
    for eta, alpha, T in _grid_candidates(bench):
        rc = RunConfig(T=T, r=1, c=cfg.c, alpha=alpha,
                       sigma_q=bench.run_config.sigma_q,
                       sigma_p=geometric_schedule(T, max(mu2_over_mu1, 0.0), eta),
                       seed=cfg.seed)
        reports = audit_deltas(bench, rc, epsilons)
        select_errs = ddppm_errors(bench, rc, cfg.trials_select)
        candidates.append({
            "eta": eta, "alpha": alpha, "T": T, "rc": rc,
            "deltas": [r.delta for r in reports],
            "select_error": float(np.mean(select_errs)),
        })

    rows = []
    final_cache: dict = {}
    for j, (eps, cap) in enumerate(zip(epsilons, caps)):
        feasible = [c for c in candidates if c["deltas"][j] <= cap]
        if not feasible:
            best = min(candidates, key=lambda c: c["deltas"][j])
            rows.append(SweepRow("ddppm", eps, cap, math.nan, math.nan, 0,
                                 "infeasible", best["deltas"][j], best["T"],
                                 best["eta"], best["alpha"]))
        else:
            best = min(feasible, key=lambda c: c["select_error"])
            key = (best["eta"], best["alpha"], best["T"])
            if key not in final_cache:
                final_cache[key] = ddppm_errors(bench, best["rc"], cfg.trials)
            errs = final_cache[key]
            rows.append(SweepRow("ddppm", eps, cap, float(np.mean(errs)),
                                 float(np.std(errs)), len(errs), "ok",
                                 best["deltas"][j], best["T"], best["eta"],
                                 best["alpha"]))
        ldp = ldp_errors(bench, eps, cap, cfg.trials)
        rows.append(SweepRow("ldp", eps, cap, float(np.mean(ldp)),
                             float(np.std(ldp)), len(ldp), "ok", cap, 0,
                             math.nan, math.nan))
    return rows


def run_fig3(bench: Workbench) -> list:
    """Fixed epsilon, fixed parameter rule: (T, error, delta) per iteration
    count up to t_max."""
    cfg = bench.config
    eps = float(cfg.fig3_epsilon)
    mu2_over_mu1 = float(bench.op.mu[1] / bench.op.mu[0])
    rows = []
    for T in range(1, cfg.t_max + 1):
        rc = RunConfig(T=T, r=1, c=cfg.c, alpha=bench.run_config.alpha,
                       sigma_q=bench.run_config.sigma_q,
                       sigma_p=geometric_schedule(T, max(mu2_over_mu1, 0.0),
                                                  cfg.eta),
                       seed=cfg.seed)
        errs = ddppm_errors(bench, rc, cfg.trials)
        delta = audit_deltas(bench, rc, [eps])[0].delta
        rows.append([T, float(np.mean(errs)), float(np.std(errs)), delta])
    return rows


FIG3_HEADER = ["T", "mean_sin_error", "std_sin_error", "delta"]


# ---------------------------------------------------------------------------
# Single runs and bounds


def run_single(bench: Workbench, include_trace: bool = False) -> dict:
    res = run_ddppm(bench.data, bench.top, bench.run_config,
                    record_iterates=False)
    per_rank = []
    for l, trace in enumerate(res.traces, start=1):
        ref = bench.reference[:, l - 1]
        per_rank.append({
            "rank": l,
            "sin_error": error_metric(ref, res.U_hat[:, l - 1]),
            "norm": res.norms[l - 1],
            "q_norms": trace.q_norms.tolist(),
            "deflation_residual": trace.deflation_residual,
        })
    payload = {
        "version": __version__,
        "config_digest": bench.config.digest(),
        "config": bench.config.to_dict(),
        "run_config": bench.run_config.to_dict(),
        "t_star": bench.t_star,
        "per_rank": per_rank,
    }
    if include_trace:
        payload["trace"] = [{
            "z": t.z.tolist(),
            "z_half": t.z_half.tolist(),
            "q_final": t.q_final.tolist(),
            "q0": t.q0.tolist(),
            "p": t.p.tolist(),
        } for t in res.traces]
    return payload


def run_bound(bench: Workbench) -> dict:
    report = convergence_bound(bench.data, bench.op, bench.run_config,
                               bench.config.gamma)
    payload = report.to_json_dict()
    payload["version"] = __version__
    payload["config_digest"] = bench.config.digest()
    payload["run_config"] = bench.run_config.to_dict()
    return payload

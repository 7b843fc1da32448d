"""Decentralized differentially private power method.

Simulates noisy power iteration over a gossip network of agents that each
hold a row block of the data matrix, audits the (epsilon, delta) privacy of
everything shared on the network via the exact Gaussian release distribution,
and evaluates the high-probability convergence bound against Monte-Carlo runs
and a local-DP baseline.
"""

__version__ = "0.1.0"

from ddppm.data import (
    Dataset,
    PartitionedDataset,
    RawDataset,
    center_rows,
    load_csv,
    normalize_unit_ball,
    partition_rows,
)
from ddppm.network import (
    MixingDiagnostics,
    NetworkOperator,
    Topology,
    build_network_operator,
    complete_mixing,
    consensus_apply,
    path_mixing,
    ring_mixing,
    validate_mixing_matrix,
)
from ddppm.engine import (
    RunConfig,
    RunResult,
    centralized_power_method,
    deflate,
    error_metric,
    geometric_schedule,
    run_ddppm,
)
from ddppm.privacy import (
    GaussianDist,
    PrivacyReport,
    ReleaseModel,
    audit_privacy,
    build_release_model,
    default_perturbations,
    delta_bound,
    observer_conditional,
    reduce_rank,
    renyi_divergence_gaussian,
)
from ddppm.analysis import (
    BoundReport,
    OmegaModel,
    build_omega,
    convergence_bound,
    hanson_wright_delta,
    rho,
    suggest_parameters,
)
from ddppm.baseline import LdpConfig, ldp_estimate, ldp_perturb

__all__ = [
    "__version__",
    "Dataset",
    "PartitionedDataset",
    "RawDataset",
    "center_rows",
    "load_csv",
    "normalize_unit_ball",
    "partition_rows",
    "MixingDiagnostics",
    "NetworkOperator",
    "Topology",
    "build_network_operator",
    "complete_mixing",
    "consensus_apply",
    "path_mixing",
    "ring_mixing",
    "validate_mixing_matrix",
    "RunConfig",
    "RunResult",
    "centralized_power_method",
    "deflate",
    "error_metric",
    "geometric_schedule",
    "run_ddppm",
    "GaussianDist",
    "PrivacyReport",
    "ReleaseModel",
    "audit_privacy",
    "build_release_model",
    "default_perturbations",
    "delta_bound",
    "observer_conditional",
    "reduce_rank",
    "renyi_divergence_gaussian",
    "BoundReport",
    "OmegaModel",
    "build_omega",
    "convergence_bound",
    "hanson_wright_delta",
    "rho",
    "suggest_parameters",
    "LdpConfig",
    "ldp_estimate",
    "ldp_perturb",
]

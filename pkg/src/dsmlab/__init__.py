"""Desk-scale laboratory for consensus-based decentralized subgradient training.

The package quantifies how the communication topology affects convergence
in iterations and in wall-clock time: consensus matrices and their
spectra, the training loop, gradient-statistics estimators, refined and
classic convergence bounds, and a straggler-driven timing simulation.
"""

from .bounds import (
    BoundInputs,
    OlshevskyThresholds,
    classic_bound,
    classic_bound_fullbatch,
    consensus_distance_bound,
    divergence_predictor,
    experimental_divergence_iteration,
    lian_threshold,
    local_bounds,
    new_bound,
    olshevsky_threshold,
    toy_worst_objective,
)
from .data import (
    Dataset,
    HingeL2,
    LinearMSE,
    Partition,
    ToyLinear,
    aligned_topology_vector,
    build_toy_dataset,
    load_csv_dataset,
    minibatch_subgradient,
    objective_from_config,
    random_split,
    split_by_label,
    synthetic_clustered_regression,
    synthetic_regression,
    toy_partition,
)
from .engine import (
    KneeResult,
    MetricsLog,
    TrainState,
    dsm_step,
    knee_learning_rate,
    run,
)
from .estimators import (
    GradientStats,
    OracleEstimates,
    Prop2Estimates,
    beta,
    beta_hat,
    measure_stats,
    permutation_oracle,
    prop2_estimates,
)
from .experiment import ExperimentConfig, parse_config, report, run_experiment
from .spectral import EnergyProfile, SpectralDecomposition, decompose, energy_fractions
from .timing import (
    CompletionSchedule,
    EmpiricalDistribution,
    load_trace,
    loss_vs_time,
    simulate_schedule,
    synthetic_distribution,
    throughput_curve,
)
from .topology import ConsensusMatrix, GraphSpec, ValidationReport, generate, validate

__version__ = "0.1.0"

__all__ = [
    "BoundInputs",
    "CompletionSchedule",
    "ConsensusMatrix",
    "Dataset",
    "EmpiricalDistribution",
    "EnergyProfile",
    "ExperimentConfig",
    "GradientStats",
    "GraphSpec",
    "HingeL2",
    "KneeResult",
    "LinearMSE",
    "MetricsLog",
    "OlshevskyThresholds",
    "OracleEstimates",
    "Partition",
    "Prop2Estimates",
    "SpectralDecomposition",
    "ToyLinear",
    "TrainState",
    "ValidationReport",
    "aligned_topology_vector",
    "beta",
    "beta_hat",
    "build_toy_dataset",
    "classic_bound",
    "classic_bound_fullbatch",
    "consensus_distance_bound",
    "decompose",
    "divergence_predictor",
    "dsm_step",
    "energy_fractions",
    "experimental_divergence_iteration",
    "generate",
    "knee_learning_rate",
    "lian_threshold",
    "load_csv_dataset",
    "load_trace",
    "local_bounds",
    "loss_vs_time",
    "measure_stats",
    "minibatch_subgradient",
    "new_bound",
    "objective_from_config",
    "olshevsky_threshold",
    "parse_config",
    "permutation_oracle",
    "prop2_estimates",
    "random_split",
    "report",
    "run",
    "run_experiment",
    "simulate_schedule",
    "split_by_label",
    "synthetic_clustered_regression",
    "synthetic_distribution",
    "synthetic_regression",
    "throughput_curve",
    "toy_partition",
    "toy_worst_objective",
    "validate",
]

"""Optimal-transport transferability metrics for embedded tasks.

Estimates how well a source model's embedding space will serve a target
task, directly from pre-extracted features: f-otce couples the two
sample clouds by entropic optimal transport and scores the negative
conditional entropy of target labels given source labels; jc-otce mixes
class-conditional Wasserstein label distances into the ground cost; nce
scores paired label sequences without any transport. Companion tools
rank candidate sources, correlate scores against known transfer
accuracies, synthesize benchmark task pairs, and gradient-ascend target
embeddings through unrolled Sinkhorn iterations.
"""

__version__ = "0.1.0"

from .data import Coupling, FeatureSet, MetricId, TransferabilityScore
from .errors import InputError, NumericalError, OtceError
from .fileio import read_csv, read_feature_file, write_feature_file
from .gradient import (
    GradConfig,
    OptimizationResult,
    f_otce_value_and_grad,
    nearest_centroid_probe,
    optimize_target_embeddings,
)
from .metrics import (
    MetricConfig,
    f_otce,
    jc_otce,
    joint_label_distribution,
    label_distance_matrix,
    nce_paired,
    negative_conditional_entropy,
)
from .ot import (
    SinkhornConfig,
    SinkhornResult,
    exact_ot_bruteforce,
    sinkhorn,
    squared_euclidean_cost,
    transport_cost,
    uniform_marginal,
)
from .rank import ScoredPair, kendall_tau, rank_sources, spearman_rho
from .synth import (
    SyntheticTaskSpec,
    generate_task_pair,
    make_cross_matching_toy,
    write_sweep,
)

__all__ = [
    "__version__",
    "Coupling",
    "FeatureSet",
    "MetricId",
    "TransferabilityScore",
    "OtceError",
    "InputError",
    "NumericalError",
    "read_feature_file",
    "write_feature_file",
    "read_csv",
    "SinkhornConfig",
    "SinkhornResult",
    "squared_euclidean_cost",
    "sinkhorn",
    "transport_cost",
    "exact_ot_bruteforce",
    "uniform_marginal",
    "MetricConfig",
    "f_otce",
    "jc_otce",
    "nce_paired",
    "joint_label_distribution",
    "negative_conditional_entropy",
    "label_distance_matrix",
    "ScoredPair",
    "spearman_rho",
    "kendall_tau",
    "rank_sources",
    "GradConfig",
    "OptimizationResult",
    "f_otce_value_and_grad",
    "optimize_target_embeddings",
    "nearest_centroid_probe",
    "SyntheticTaskSpec",
    "generate_task_pair",
    "make_cross_matching_toy",
    "write_sweep",
]

"""Transferability metrics from pre-extracted embeddings.

Pipeline shared by all metrics: a ground cost between source and target
samples, an entropic transport plan on uniform marginals, the joint
label distribution induced by that plan, and finally the negative
conditional entropy of target labels given source labels. The three
metrics differ only in the cost:

  f-otce   squared Euclidean distance between embeddings
  jc-otce  gamma * squared distance + (1 - gamma) * label distance,
           where the label distance is the Wasserstein distance between
           class-conditional feature clouds
  nce      no transport at all; the identity pairing of equal-length
           label sequences
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Coupling, FeatureSet, MetricId, TransferabilityScore
from .errors import DimensionMismatch, LabelOutOfRange, LengthMismatch
from .ot import SinkhornConfig, sinkhorn, squared_euclidean_cost, uniform_marginal

__all__ = [
    "MetricConfig",
    "joint_label_distribution",
    "negative_conditional_entropy",
    "f_otce",
    "jc_otce",
    "nce_paired",
    "label_distance_matrix",
]


@dataclass(frozen=True)
class MetricConfig:
    """Shared metric knobs.

    gamma weights the sample distance against the label distance inside
    the jc-otce ground cost; 0.5 by default. standardize_features, off
    by default, standardizes each feature dimension using statistics
    pooled over both tasks before any cost is computed.
    """

    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    gamma: float = 0.5
    standardize_features: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")


def joint_label_distribution(
    coupling: Coupling | np.ndarray,
    ys: np.ndarray,
    yt: np.ndarray,
    source_classes: int,
    target_classes: int,
) -> np.ndarray:
    """Aggregate plan mass into an empirical P(ys, yt) of shape (Cs, Ct).

    Entry (a, b) collects the plan mass of every sample pair whose
    source label is a and target label is b; rows summed give the
    source-label marginal. Absent classes yield zero rows/columns.
    """
    plan = coupling.values if isinstance(coupling, Coupling) else np.asarray(coupling)
    ys = np.asarray(ys)
    yt = np.asarray(yt)
    m, n = plan.shape
    if ys.shape != (m,) or yt.shape != (n,):
        raise DimensionMismatch(
            f"labels {ys.shape}/{yt.shape} do not fit plan {plan.shape}"
        )
    for name, labels, count in (("ys", ys, source_classes), ("yt", yt, target_classes)):
        if labels.min() < 0 or labels.max() >= count:
            raise LabelOutOfRange(f"{name} contains labels outside [0, {count})")
    return _aggregate_joint(plan, ys, yt, source_classes, target_classes)


def _aggregate_joint(
    plan: np.ndarray, ys: np.ndarray, yt: np.ndarray, cs: int, ct: int
) -> np.ndarray:
    s_ind = np.zeros((plan.shape[0], cs))
    s_ind[np.arange(plan.shape[0]), ys] = 1.0
    t_ind = np.zeros((plan.shape[1], ct))
    t_ind[np.arange(plan.shape[1]), yt] = 1.0
    return s_ind.T @ plan @ t_ind


def negative_conditional_entropy(joint: np.ndarray) -> float:
    """-H(Yt | Ys) of a joint label distribution.

    Uses the 0 * log 0 = 0 convention; rows with zero source-label mass
    contribute nothing. The result lies in [-log(Ct), 0]: each term
    pairs a joint cell with its row sum, and no cell can exceed its row
    sum, so every summand is <= 0.
    """
    joint = np.asarray(joint, dtype=np.float64)
    row = joint.sum(axis=1)
    mask = joint > 0.0
    log_joint = np.zeros_like(joint)
    np.log(joint, out=log_joint, where=mask)
    log_row = np.zeros_like(row)
    np.log(row, out=log_row, where=row > 0.0)
    terms = np.where(mask, joint * (log_joint - log_row[:, None]), 0.0)
    return float(terms.sum())


def _standardize_pooled(xs: np.ndarray, xt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pooled = np.vstack([xs, xt])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (xs - mean) / std, (xt - mean) / std


def _prepare(
    src: FeatureSet, tgt: FeatureSet, config: MetricConfig
) -> tuple[np.ndarray, np.ndarray]:
    if src.dim != tgt.dim:
        raise DimensionMismatch(
            f"feature dimensions differ: source {src.dim} vs target {tgt.dim}"
        )
    if config.standardize_features:
        return _standardize_pooled(src.features, tgt.features)
    return src.features, tgt.features


def _score_from_cost(
    cost: np.ndarray,
    src: FeatureSet,
    tgt: FeatureSet,
    config: MetricConfig,
    metric_id: MetricId,
    gamma: float | None,
) -> TransferabilityScore:
    result = sinkhorn(
        cost, uniform_marginal(src.n), uniform_marginal(tgt.n), config.sinkhorn
    )
    joint = _aggregate_joint(
        result.coupling.values, src.labels, tgt.labels, src.class_count, tgt.class_count
    )
    return TransferabilityScore(
        metric_id=metric_id,
        value=negative_conditional_entropy(joint),
        lam=config.sinkhorn.lam,
        gamma=gamma,
        iterations_used=result.iterations,
        converged=result.converged,
    )


def f_otce(src: FeatureSet, tgt: FeatureSet, config: MetricConfig | None = None) -> TransferabilityScore:
    """Transferability from the squared-distance transport plan.

    Deterministic for fixed inputs and config; higher (closer to 0)
    means target labels are more predictable from source labels under
    the optimal coupling.
    """
    config = config or MetricConfig()
    xs, xt = _prepare(src, tgt, config)
    cost = squared_euclidean_cost(xs, xt)
    return _score_from_cost(cost, src, tgt, config, MetricId.F_OTCE, gamma=None)


def label_distance_matrix(
    src: FeatureSet, tgt: FeatureSet, config: MetricConfig | None = None
) -> np.ndarray:
    """(Cs, Ct) Wasserstein distances between class-conditional clouds.

    Entry (a, b) is the unregularized transport cost of the entropic
    plan between class-a source features and class-b target features
    under squared Euclidean cost. Rows/columns of absent classes are
    +inf sentinels; no sample carries those labels, so downstream cost
    lookups never read them.
    """
    config = config or MetricConfig()
    xs, xt = _prepare(src, tgt, config)
    distances = np.full((src.class_count, tgt.class_count), np.inf)
    target_clouds = {int(b): xt[tgt.labels == b] for b in tgt.present_classes}
    for a in src.present_classes:
        cloud_a = xs[src.labels == a]
        for b, cloud_b in target_clouds.items():
            cost = squared_euclidean_cost(cloud_a, cloud_b)
            result = sinkhorn(
                cost,
                uniform_marginal(cloud_a.shape[0]),
                uniform_marginal(cloud_b.shape[0]),
                config.sinkhorn,
            )
            distances[int(a), b] = result.transport_cost
    return distances


def jc_otce(src: FeatureSet, tgt: FeatureSet, config: MetricConfig | None = None) -> TransferabilityScore:
    """Transferability from the joint sample-and-label-distance plan.

    With gamma = 1 the label term vanishes and the cost reduces exactly
    to the f-otce cost, so the two metrics agree bit-for-bit; the label
    distance matrix is not even computed in that case.
    """
    config = config or MetricConfig()
    xs, xt = _prepare(src, tgt, config)
    cost = squared_euclidean_cost(xs, xt)
    if config.gamma < 1.0:
        distances = label_distance_matrix(src, tgt, config)
        # Per-pair lookup of the class-pair distance; present labels
        # never index an inf sentinel.
        label_term = distances[src.labels][:, tgt.labels]
        cost = config.gamma * cost + (1.0 - config.gamma) * label_term
    return _score_from_cost(cost, src, tgt, config, MetricId.JC_OTCE, gamma=config.gamma)


def nce_paired(ys: np.ndarray, yt: np.ndarray) -> float:
    """-H(Yt | Ys) of the empirical joint of paired label sequences.

    Equivalent to scoring the identity coupling pi[i, i] = 1/n, which is
    the degenerate case where source and target samples are the same
    instances.
    """
    ys = np.asarray(ys)
    yt = np.asarray(yt)
    if ys.ndim != 1 or yt.ndim != 1:
        raise DimensionMismatch("label sequences must be 1-D")
    if ys.shape[0] != yt.shape[0]:
        raise LengthMismatch(f"paired labels differ in length: {ys.shape[0]} vs {yt.shape[0]}")
    if ys.shape[0] == 0:
        raise LengthMismatch("paired labels must be non-empty")
    if ys.min() < 0 or yt.min() < 0:
        raise LabelOutOfRange("labels must be non-negative")
    n = ys.shape[0]
    joint = np.zeros((int(ys.max()) + 1, int(yt.max()) + 1))
    np.add.at(joint, (ys, yt), 1.0 / n)
    return negative_conditional_entropy(joint)

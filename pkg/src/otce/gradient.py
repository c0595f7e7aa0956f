"""Differentiable transferability and target-embedding optimization.

The f-otce pipeline (cost -> fixed number of Sinkhorn updates -> plan ->
joint label distribution -> negative conditional entropy) is replayed
with a fixed iteration count K and no early stopping, and its exact
reverse-mode derivative with respect to the target embeddings is
accumulated by walking the same K updates backwards. Everything runs in
float64; the forward pass shares the update steps of the production
solver, so the value equals ``f_otce`` evaluated with exactly K
iterations.

Gradient ascent on that value moves raw target embeddings (source
embeddings stay frozen) toward configurations where target labels are
more predictable from source labels. A nearest-centroid probe stands in
for downstream classifier accuracy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureSet
from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    IoFailure,
    MissingClass,
    NonFiniteGradient,
)
from .metrics import _aggregate_joint, negative_conditional_entropy
from .ot import (
    _EXP_CLAMP,
    SinkhornConfig,
    _col_potential,
    _plan_from_potentials,
    _row_potential,
    squared_euclidean_cost,
)

__all__ = [
    "GradConfig",
    "OptimizationResult",
    "f_otce_value_and_grad",
    "optimize_target_embeddings",
    "nearest_centroid_probe",
    "write_trace",
]

# A step counts as divergent when the traced score drops by more than
# this; this many in a row aborts the run.
_DIVERGENCE_DROP = 0.1
_DIVERGENCE_RUN = 10


@dataclass(frozen=True)
class GradConfig:
    """Optimization knobs.

    unroll_iterations is the fixed Sinkhorn iteration count K inside the
    differentiated pipeline (the sinkhorn config's own iteration cap and
    tolerance do not apply there; there is no early stopping to keep the
    computational graph fixed). Batches are drawn without replacement
    per epoch from the seeded stream.
    """

    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    unroll_iterations: int = 100
    learning_rate: float = 0.01
    steps: int = 100
    source_batch: int = 256
    target_batch: int = 25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.unroll_iterations < 1:
            raise ValueError(f"unroll_iterations must be >= 1, got {self.unroll_iterations!r}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate!r}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps!r}")
        if self.source_batch < 1 or self.target_batch < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass(frozen=True)
class OptimizationResult:
    """Optimized target embeddings plus the per-step ascent trace.

    trace has one row per step: (step index, batch f-otce value, L2 norm
    of the batch gradient).
    """

    target: FeatureSet
    trace: np.ndarray


def f_otce_value_and_grad(
    xs: np.ndarray,
    ys: np.ndarray,
    xt: np.ndarray,
    yt: np.ndarray,
    config: GradConfig | None = None,
) -> tuple[float, np.ndarray]:
    """f-otce through exactly K Sinkhorn iterations, and d(value)/d(xt).

    The gradient is the exact reverse-mode derivative of the unrolled
    K-iteration graph; source embeddings are treated as constants.

    Raises:
        NonFiniteGradient: the pipeline produced NaN/inf (plain-scaling
            iterations with a lambda too small for the instance; retry
            with log_domain=True).
    """
    config = config or GradConfig()
    xs = np.asarray(xs, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    ys = np.asarray(ys)
    yt = np.asarray(yt)
    cs = int(ys.max()) + 1
    ct = int(yt.max()) + 1
    cost = squared_euclidean_cost(xs, xt)
    lam = config.sinkhorn.lam
    k = config.unroll_iterations

    if config.sinkhorn.log_domain:
        value, dcost = _log_unrolled(cost, ys, yt, cs, ct, lam, k)
    else:
        value, dcost = _scaling_unrolled(cost, ys, yt, cs, ct, lam, k)

    # cost[i, j] = ||xs_i - xt_j||^2  =>  d cost / d xt_j = 2 (xt_j - xs_i)
    grad = 2.0 * (dcost.sum(axis=0)[:, None] * xt - dcost.T @ xs)
    if not np.isfinite(grad).all() or not np.isfinite(value):
        raise NonFiniteGradient(
            f"non-finite gradient (lam={lam!r}); retry with log_domain=True"
        )
    return value, grad


def _joint_and_adjoint(
    plan: np.ndarray, ys: np.ndarray, yt: np.ndarray, cs: int, ct: int
) -> tuple[float, np.ndarray]:
    """Score the plan and return d(value)/d(plan).

    d value / d joint[a, b] = log(joint[a, b] / row[a]); expanding back
    through the label aggregation gives per-pair adjoints. Cells with
    zero mass carry zero adjoint (the 0 * log 0 branch is flat).
    """
    joint = _aggregate_joint(plan, ys, yt, cs, ct)
    value = negative_conditional_entropy(joint)
    row = joint.sum(axis=1)
    mask = joint > 0.0
    log_joint = np.zeros_like(joint)
    np.log(joint, out=log_joint, where=mask)
    log_row = np.zeros_like(row)
    np.log(row, out=log_row, where=row > 0.0)
    log_ratio = np.where(mask, log_joint - log_row[:, None], 0.0)
    dplan = log_ratio[ys][:, yt]
    return value, dplan


def _log_unrolled(
    cost: np.ndarray, ys: np.ndarray, yt: np.ndarray, cs: int, ct: int, lam: float, k: int
) -> tuple[float, np.ndarray]:
    m, n = cost.shape
    ncl = cost * (-1.0 / lam)
    log_mu = np.log(np.full(m, 1.0 / m))
    log_nu = np.log(np.full(n, 1.0 / n))
    work = np.empty_like(ncl)

    fls = np.empty((k, m))
    gls = np.empty((k, n))
    gl = np.zeros(n)
    for t in range(k):
        fl = _row_potential(ncl, gl, log_mu, work)
        gl = _col_potential(ncl, fl, log_nu, work)
        fls[t] = fl
        gls[t] = gl
    plan = _plan_from_potentials(ncl, fls[-1], gls[-1])
    value, dplan = _joint_and_adjoint(plan, ys, yt, cs, ct)

    # plan = exp(ncl + fl + gl): one product serves all three adjoints.
    weighted = dplan * plan
    dfl = weighted.sum(axis=1)
    dgl = weighted.sum(axis=0)
    dncl = weighted.copy()

    for t in range(k - 1, -1, -1):
        # gl_t = log_nu - LSE_i(ncl + fl_t): column softmax
        col_soft = np.exp(
            np.maximum(ncl + fls[t][:, None] - (log_nu - gls[t])[None, :], _EXP_CLAMP)
        )
        dfl -= col_soft @ dgl
        dncl -= col_soft * dgl[None, :]
        # fl_t = log_mu - LSE_j(ncl + gl_{t-1}): row softmax
        gl_prev = gls[t - 1] if t > 0 else np.zeros(n)
        row_soft = np.exp(
            np.maximum(ncl + gl_prev[None, :] - (log_mu - fls[t])[:, None], _EXP_CLAMP)
        )
        dgl = -(row_soft.T @ dfl)
        dncl -= row_soft * dfl[:, None]
        dfl = np.zeros(m)

    return value, dncl * (-1.0 / lam)


def _scaling_unrolled(
    cost: np.ndarray, ys: np.ndarray, yt: np.ndarray, cs: int, ct: int, lam: float, k: int
) -> tuple[float, np.ndarray]:
    m, n = cost.shape
    mu = np.full(m, 1.0 / m)
    nu = np.full(n, 1.0 / n)
    kernel = np.exp(cost * (-1.0 / lam))  # honest underflow, as in the solver

    us = np.empty((k, m))
    vs = np.empty((k, n))
    kvs = np.empty((k, m))
    kus = np.empty((k, n))
    v = np.ones(n)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for t in range(k):
            kv = (kernel * v[None, :]).sum(axis=1)
            u = mu / kv
            ku = (kernel * u[:, None]).sum(axis=0)
            v = nu / ku
            us[t], vs[t], kvs[t], kus[t] = u, v, kv, ku
        if not (np.isfinite(us).all() and np.isfinite(vs).all()):
            raise NonFiniteGradient(
                f"scaling iterations under/overflowed (lam={lam!r}); "
                "retry with log_domain=True"
            )
        plan = us[-1][:, None] * kernel * vs[-1][None, :]
        value, dplan = _joint_and_adjoint(plan, ys, yt, cs, ct)

        # plan = u * kernel * v (outer product structure)
        du = (dplan * kernel * vs[-1][None, :]).sum(axis=1)
        dv = (dplan * kernel * us[-1][:, None]).sum(axis=0)
        dkernel = dplan * us[-1][:, None] * vs[-1][None, :]

        for t in range(k - 1, -1, -1):
            # v_t = nu / ku_t
            dku = -dv * vs[t] / kus[t]
            dkernel += us[t][:, None] * dku[None, :]
            du += kernel @ dku
            # u_t = mu / kv_t
            dkv = -du * us[t] / kvs[t]
            v_prev = vs[t - 1] if t > 0 else np.ones(n)
            dkernel += dkv[:, None] * v_prev[None, :]
            dv = kernel.T @ dkv
            du = np.zeros(m)

        # kernel = exp(-cost/lam)
        dcost = dkernel * kernel * (-1.0 / lam)
    return value, dcost


def optimize_target_embeddings(
    src: FeatureSet, tgt: FeatureSet, config: GradConfig
) -> OptimizationResult:
    """Gradient ascent of f-otce over the target embedding matrix.

    Source embeddings are frozen. Each step draws one source and one
    target mini-batch (without replacement within an epoch, reshuffling
    between epochs from the seeded stream), evaluates the batch value
    and gradient through K unrolled iterations, and updates the batch's
    target rows in place. Labels are untouched.

    Raises:
        DivergenceDetected: the traced batch score fell by more than 0.1
            on each of 10 consecutive steps.
        NonFiniteGradient: propagated from the gradient pipeline.
    """
    if src.dim != tgt.dim:
        raise DimensionMismatch(
            f"feature dimensions differ: source {src.dim} vs target {tgt.dim}"
        )
    rng = np.random.Generator(np.random.Philox(config.seed))
    xt = tgt.features.copy()
    xs = src.features
    trace = np.empty((config.steps, 3))
    src_queue: list[int] = []
    tgt_queue: list[int] = []
    previous = None
    drop_run = 0
    for step in range(config.steps):
        if not tgt_queue:
            tgt_queue = list(rng.permutation(tgt.n))
        if not src_queue:
            src_queue = list(rng.permutation(src.n))
        take_t = min(config.target_batch, len(tgt_queue))
        take_s = min(config.source_batch, len(src_queue))
        # Sorted batch indices keep reductions order-stable, so a batch
        # covering the whole set scores identically every step.
        batch_t = np.sort(np.array(tgt_queue[:take_t], dtype=np.intp))
        batch_s = np.sort(np.array(src_queue[:take_s], dtype=np.intp))
        del tgt_queue[:take_t], src_queue[:take_s]

        value, grad = f_otce_value_and_grad(
            xs[batch_s], src.labels[batch_s], xt[batch_t], tgt.labels[batch_t], config
        )
        xt[batch_t] += config.learning_rate * grad
        trace[step] = (step, value, float(np.linalg.norm(grad)))

        if previous is not None and value < previous - _DIVERGENCE_DROP:
            drop_run += 1
            if drop_run >= _DIVERGENCE_RUN:
                raise DivergenceDetected(
                    f"score fell by > {_DIVERGENCE_DROP} for "
                    f"{_DIVERGENCE_RUN} consecutive steps (step {step})"
                )
        else:
            drop_run = 0
        previous = value

    return OptimizationResult(target=tgt.with_features(xt), trace=trace)


def nearest_centroid_probe(train: FeatureSet, test: FeatureSet) -> float:
    """Accuracy of nearest-class-centroid classification on ``test``.

    Centroids come from ``train``; every class present in ``test`` must
    have at least one training sample. Distance ties resolve to the
    smaller class index. Deterministic.
    """
    if train.dim != test.dim:
        raise DimensionMismatch(
            f"feature dimensions differ: train {train.dim} vs test {test.dim}"
        )
    train_classes = train.present_classes
    missing = np.setdiff1d(test.present_classes, train_classes)
    if missing.size:
        raise MissingClass(f"test classes {missing.tolist()} have no training samples")
    centroids = np.stack(
        [train.features[train.labels == c].mean(axis=0) for c in train_classes]
    )
    distances = squared_euclidean_cost(test.features, centroids)
    predictions = train_classes[np.argmin(distances, axis=1)]
    return float((predictions == test.labels).mean())


def write_trace(trace: np.ndarray, path: str | Path) -> None:
    """Write an optimization trace as CSV: step, f_otce, grad_norm."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "f_otce", "grad_norm"])
            for step, value, norm in trace:
                writer.writerow([int(step), repr(float(value)), repr(float(norm))])
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

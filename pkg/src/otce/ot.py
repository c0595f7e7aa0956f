"""Ground costs, the entropic Sinkhorn solver, and a brute-force oracle.

The solver minimizes ``sum(c * pi) - lam * H(pi)`` with
``H(pi) = -sum(pi * log(pi))`` over couplings with prescribed marginals.
Log-domain (log-sum-exp) updates are the default; the plain scaling
variant is kept for cross-checking and raises :class:`NumericalOverflow`
when ``exp(-c/lam)`` degenerates.

Within one solve every reduction runs in a fixed sequential order, so
results are bit-stable across runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .data import Coupling
from .errors import DimensionMismatch, NumericalOverflow, TooLarge

__all__ = [
    "SinkhornConfig",
    "SinkhornResult",
    "squared_euclidean_cost",
    "sinkhorn",
    "transport_cost",
    "exact_ot_bruteforce",
    "uniform_marginal",
]

# Arguments below this are clamped before exp(). exp(-700) ~ 1e-304 is
# already negligible against any retained mass, and the clamp keeps
# numpy's exp off its scalar fallback path for subnormal results.
_EXP_CLAMP = -700.0


@dataclass(frozen=True)
class SinkhornConfig:
    """Entropic-solver knobs.

    lam: entropic regularization weight, > 0. Default 0.1.
    max_iterations: hard cap on full update pairs. Default 1000.
    marginal_tolerance: stop once the L-infinity marginal violation of
        the current plan is at or below this. Default 1e-9.
    log_domain: use log-sum-exp updates (default) instead of plain
        scaling.
    """

    lam: float = 0.1
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-9
    log_domain: bool = True

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam!r}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations!r}")
        if not self.marginal_tolerance > 0:
            raise ValueError(
                f"marginal_tolerance must be > 0, got {self.marginal_tolerance!r}"
            )


@dataclass(frozen=True)
class SinkhornResult:
    """Solve outcome: the plan plus honest convergence diagnostics.

    ``transport_cost`` is the unregularized objective ``<cost, plan>``.
    ``converged`` is set only after verifying the true L-infinity
    marginal violation of the returned plan against the tolerance.
    """

    coupling: Coupling
    iterations: int
    final_marginal_error: float
    converged: bool
    transport_cost: float


def uniform_marginal(size: int) -> np.ndarray:
    """The (1/size, ..., 1/size) probability vector."""
    return np.full(size, 1.0 / size)


def squared_euclidean_cost(xs: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, an (m, n) cost matrix.

    cost[i, j] = || xs[i] - xt[j] ||^2, clipped at zero to absorb the
    tiny negatives the expanded form can produce.
    """
    xs = np.asarray(xs, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if xs.ndim != 2 or xt.ndim != 2:
        raise DimensionMismatch("inputs must be 2-D (samples, features)")
    if xs.shape[1] != xt.shape[1]:
        raise DimensionMismatch(
            f"feature dimensions differ: {xs.shape[1]} vs {xt.shape[1]}"
        )
    sq_s = np.einsum("ij,ij->i", xs, xs)
    sq_t = np.einsum("ij,ij->i", xt, xt)
    cost = sq_s[:, None] + sq_t[None, :] - 2.0 * (xs @ xt.T)
    np.maximum(cost, 0.0, out=cost)
    return cost


def transport_cost(coupling: Coupling | np.ndarray, cost: np.ndarray) -> float:
    """Unregularized transport objective ``sum(cost * plan)``."""
    plan = coupling.values if isinstance(coupling, Coupling) else np.asarray(coupling)
    cost = np.asarray(cost, dtype=np.float64)
    if plan.shape != cost.shape:
        raise DimensionMismatch(f"plan {plan.shape} vs cost {cost.shape}")
    return float((plan * cost).sum())


def _check_marginals(cost: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> None:
    m, n = cost.shape
    if mu.shape != (m,) or nu.shape != (n,):
        raise DimensionMismatch(
            f"marginals {mu.shape}/{nu.shape} do not fit cost {cost.shape}"
        )
    for name, vec in (("mu", mu), ("nu", nu)):
        if abs(float(vec.sum()) - 1.0) > 1e-12:
            raise DimensionMismatch(f"{name} must sum to 1 within 1e-12")
        if (vec <= 0).any():
            raise DimensionMismatch(f"{name} must be strictly positive")
    if not np.isfinite(cost).all():
        raise DimensionMismatch("cost matrix must be finite")


# -- shared log-domain update steps (also driven by the unrolled
#    gradient in otce.gradient, which must replay the exact same ops) ----

def _row_potential(
    neg_cost_over_lam: np.ndarray,
    gl: np.ndarray,
    log_mu: np.ndarray,
    work: np.ndarray,
) -> np.ndarray:
    """fl = log_mu - LSE_j(neg_cost_over_lam + gl), max-shifted."""
    np.add(neg_cost_over_lam, gl[None, :], out=work)
    shift = work.max(axis=1)
    work -= shift[:, None]
    np.maximum(work, _EXP_CLAMP, out=work)
    np.exp(work, out=work)
    return log_mu - (np.log(work.sum(axis=1)) + shift)


def _col_potential(
    neg_cost_over_lam: np.ndarray,
    fl: np.ndarray,
    log_nu: np.ndarray,
    work: np.ndarray,
) -> np.ndarray:
    """gl = log_nu - LSE_i(neg_cost_over_lam + fl), max-shifted."""
    np.add(neg_cost_over_lam, fl[:, None], out=work)
    shift = work.max(axis=0)
    work -= shift[None, :]
    np.maximum(work, _EXP_CLAMP, out=work)
    np.exp(work, out=work)
    return log_nu - (np.log(work.sum(axis=0)) + shift)


def _plan_from_potentials(
    neg_cost_over_lam: np.ndarray, fl: np.ndarray, gl: np.ndarray
) -> np.ndarray:
    return np.exp(np.maximum(neg_cost_over_lam + fl[:, None] + gl[None, :], _EXP_CLAMP))


def _solve_log(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    config: SinkhornConfig,
) -> tuple[np.ndarray, int, float, bool]:
    m, n = cost.shape
    ncl = cost * (-1.0 / config.lam)
    log_mu = np.log(mu)
    log_nu = np.log(nu)
    fl = np.zeros(m)
    gl = np.zeros(n)
    work = np.empty_like(ncl)
    tol = config.marginal_tolerance
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        fl = _row_potential(ncl, gl, log_mu, work)
        gl_next = _col_potential(ncl, fl, log_nu, work)
        # Column violation of the pre-update plan is free:
        # colsum_j = nu_j * exp(gl_j - gl_next_j). Cheap estimate; the
        # true violation is verified before declaring convergence.
        estimate = float(np.abs(nu * np.expm1(gl - gl_next)).max())
        gl = gl_next
        if estimate <= tol:
            plan = _plan_from_potentials(ncl, fl, gl)
            error = _marginal_error(plan, mu, nu)
            if error <= tol:
                return plan, iterations, error, True
    plan = _plan_from_potentials(ncl, fl, gl)
    error = _marginal_error(plan, mu, nu)
    return plan, iterations, error, error <= tol


def _solve_scaling(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    config: SinkhornConfig,
) -> tuple[np.ndarray, int, float, bool]:
    # No exponent clamp here: honest underflow to zero is what lets the
    # overflow check below detect a hopeless kernel.
    kernel = np.exp(cost * (-1.0 / config.lam))
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    tol = config.marginal_tolerance
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        # (kernel * v).sum keeps reductions sequential and deterministic.
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            kv = (kernel * v[None, :]).sum(axis=1)
            u = mu / kv
            ku = (kernel * u[:, None]).sum(axis=0)
            v = nu / ku
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NumericalOverflow(
                "scaling-mode Sinkhorn under/overflowed "
                f"(lam={config.lam!r}); retry with log_domain=True"
            )
        plan = u[:, None] * kernel * v[None, :]
        error = _marginal_error(plan, mu, nu)
        if error <= tol:
            return plan, iterations, error, True
    return plan, iterations, error, error <= tol


def _marginal_error(plan: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    row = np.abs(plan.sum(axis=1) - mu).max()
    col = np.abs(plan.sum(axis=0) - nu).max()
    return float(max(row, col))


def sinkhorn(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    config: SinkhornConfig | None = None,
) -> SinkhornResult:
    """Solve entropic OT between histograms ``mu`` and ``nu``.

    Non-convergence within the iteration budget is not an error: the
    result carries ``converged=False`` and the achieved marginal error.

    Raises:
        DimensionMismatch: shapes disagree, marginals do not sum to 1
            within 1e-12 or contain non-positive mass, or cost is not
            finite.
        NumericalOverflow: scaling mode only, when ``exp(-c/lam)``
            collapses; callers should retry with ``log_domain=True``.
    """
    config = config or SinkhornConfig()
    cost = np.asarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if cost.ndim != 2:
        raise DimensionMismatch(f"cost must be 2-D, got ndim={cost.ndim}")
    _check_marginals(cost, mu, nu)

    solver = _solve_log if config.log_domain else _solve_scaling
    plan, iterations, error, converged = solver(cost, mu, nu, config)
    # The column update pins total mass to 1 up to float residue, so the
    # Coupling mass invariant holds without renormalizing (renormalizing
    # would break bit-equality with the unrolled gradient path).
    coupling = Coupling(values=plan, row_marginal=mu, col_marginal=nu)
    return SinkhornResult(
        coupling=coupling,
        iterations=iterations,
        final_marginal_error=error,
        converged=converged,
        transport_cost=transport_cost(coupling, cost),
    )


def exact_ot_bruteforce(cost: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Exact OT value for a square cost with uniform marginals, n <= 8.

    With uniform marginals the unregularized optimum is attained at a
    permutation matrix, so full enumeration is exact:
    value = min over permutations of mean(cost[i, sigma(i)]).
    Returns the value and the first permutation (in lexicographic order)
    attaining it.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionMismatch(f"cost must be square, got {cost.shape}")
    n = cost.shape[0]
    if n > 8:
        raise TooLarge(f"brute-force oracle limited to n <= 8, got {n}")
    best = np.inf
    best_perm: tuple[int, ...] = tuple(range(n))
    rows = np.arange(n)
    for perm in permutations(range(n)):
        value = cost[rows, perm].sum()
        if value < best:
            best = value
            best_perm = perm
    return float(best / n), best_perm

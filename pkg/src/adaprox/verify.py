"""Independent oracles for the test suite and the runtime audit mode.

None of these share code paths with the operators they check: the l1 prox
oracle minimizes the prox subproblem by scalar grid search plus golden-section
refinement, gradients are checked by central differences, and the accuracy
condition is audited against freshly computed full gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from .estimator import ConditionParams, Variant

if TYPE_CHECKING:  # pragma: no cover
    from .estimator import SamplingStrategy
    from .metrics import EvalCounters
    from .problems import CompositeProblem, NonsmoothTerm, SmoothObjective

__all__ = [
    "finite_difference_gradient",
    "l1_prox_oracle",
    "ProxOptimalityResult",
    "check_prox_optimality",
    "ConditionReport",
    "audit_condition",
    "MonteCarloReport",
    "monte_carlo_condition",
    "exact_sample_variance",
    "max_sample_deviation",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def finite_difference_gradient(objective, x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient ``(f(x + h e_j) - f(x - h e_j)) / (2h)`` per coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[j] += step
        backward[j] -= step
        out[j] = (objective.value(forward) - objective.value(backward)) / (2.0 * step)
    return out


def l1_prox_oracle(
    alpha,
    lam,
    y,
    grid_step: float = 1e-4,
    refine_tol: float = 1e-10,
) -> np.ndarray:
    """Brute-force minimizer of ``lam*|p| + (p - y)^2 / (2*alpha)`` per coordinate.

    Scans a grid over ``[y - 2*alpha*lam - 1, y + 2*alpha*lam + 1]`` (the
    minimizer provably lies within ``alpha*lam`` of ``y``) and refines the best
    cell by golden-section search.  ``alpha`` and ``lam`` may be scalars or
    per-coordinate arrays.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), y.shape).astype(float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), y.shape).astype(float)
    if np.any(alpha <= 0) or np.any(lam < 0):
        raise ValueError("need alpha > 0 and lam >= 0")

    weight = alpha * lam  # minimizing weight*|p| + (p - y)^2 / 2 coordinatewise

    def objective(p):
        return weight * np.abs(p) + 0.5 * (p - y) ** 2

    lo = y - 2.0 * weight - 1.0
    width = 2.0 + 4.0 * float(weight.max())
    n_points = int(np.ceil(width / grid_step)) + 1
    offsets = grid_step * np.arange(n_points)

    best_val = np.full(y.shape, np.inf)
    best_p = np.zeros_like(y)
    chunk = max(1, int(2e7 // max(n_points, 1)))
    for start in range(0, y.size, chunk):
        sl = slice(start, start + chunk)
        grid = lo[sl, np.newaxis] + offsets[np.newaxis, :]
        vals = weight[sl, np.newaxis] * np.abs(grid) + 0.5 * (grid - y[sl, np.newaxis]) ** 2
        arg = np.argmin(vals, axis=1)
        rows = np.arange(grid.shape[0])
        best_p[sl] = grid[rows, arg]
        best_val[sl] = vals[rows, arg]

    a = best_p - grid_step
    b = best_p + grid_step
    while float(np.max(b - a)) > refine_tol:
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        take_left = objective(c) < objective(d)
        b = np.where(take_left, d, b)
        a = np.where(take_left, a, c)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class ProxOptimalityResult:
    ok: bool
    witness: str = ""


def check_prox_optimality(term, alpha: float, y: np.ndarray, p: np.ndarray, tol: float):
    """First-order optimality check of a claimed prox output, per term kind.

    Returns a pass/fail result with a textual witness of the first violation.
    """
    from .problems import BallIndicator, BoxIndicator, L1, Zero

    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)

    if isinstance(term, Zero):
        err = float(np.max(np.abs(p - y))) if y.size else 0.0
        if err > tol:
            return ProxOptimalityResult(False, f"identity violated by {err:.3e}")
        return ProxOptimalityResult(True)

    if isinstance(term, L1):
        lam = term.weight
        residual = (y - p) / alpha
        for j in range(y.size):
            if p[j] != 0.0:
                err = abs(residual[j] - lam * np.sign(p[j]))
                if err > tol:
                    return ProxOptimalityResult(
                        False, f"coordinate {j}: stationarity off by {err:.3e}"
                    )
            else:
                if abs(y[j]) / alpha > lam + tol:
                    return ProxOptimalityResult(
                        False,
                        f"coordinate {j}: |y|/alpha = {abs(y[j]) / alpha:.6e} exceeds lam + tol",
                    )
        return ProxOptimalityResult(True)

    if isinstance(term, BallIndicator):
        r = term.radius
        norm_p = float(np.linalg.norm(p))
        if norm_p > r + tol:
            return ProxOptimalityResult(False, f"||p|| = {norm_p:.6e} outside radius")
        norm_y = float(np.linalg.norm(y))
        if norm_y <= r:
            err = float(np.linalg.norm(p - y))
            if err > tol:
                return ProxOptimalityResult(False, f"interior point moved by {err:.3e}")
        else:
            err = float(np.linalg.norm(p - y * (r / norm_y)))
            if err > tol:
                return ProxOptimalityResult(False, f"radial projection off by {err:.3e}")
        return ProxOptimalityResult(True)

    if isinstance(term, BoxIndicator):
        lo = np.asarray(term.lower, dtype=float)
        hi = np.asarray(term.upper, dtype=float)
        clamped = np.minimum(np.maximum(y, lo), hi)
        err = float(np.max(np.abs(p - clamped))) if y.size else 0.0
        if err > tol:
            return ProxOptimalityResult(False, f"clamp violated by {err:.3e}")
        return ProxOptimalityResult(True)

    raise ValueError(f"unsupported nonsmooth term {type(term).__name__}")


# ---------------------------------------------------------------------------
# Accuracy-condition audits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    """Both sides of the deterministic accuracy condition, plus its rearranged form."""

    k: int
    error_norm: float
    condition_rhs: float
    rearranged_lhs: float
    rearranged_rhs: float
    sampled_reduced_norm: float
    true_reduced_norm: float
    satisfied: bool
    rearranged_satisfied: bool

    @property
    def margin(self) -> float:
        return self.condition_rhs - self.error_norm

    @property
    def rearranged_margin(self) -> float:
        return self.rearranged_rhs - self.rearranged_lhs

    def to_line(self) -> str:
        return (
            f"k={self.k} err={self.error_norm!r} rhs={self.condition_rhs!r} "
            f"ok={self.satisfied} re_lhs={self.rearranged_lhs!r} "
            f"re_rhs={self.rearranged_rhs!r} re_ok={self.rearranged_satisfied}"
        )


def audit_condition(
    problem,
    g: np.ndarray,
    y: np.ndarray,
    x_next: np.ndarray,
    alpha: float,
    params: ConditionParams,
    k: int,
    audit_counters: Optional["EvalCounters"] = None,
) -> ConditionReport:
    """Deterministic audit of the finite-sum accuracy condition at one iteration.

    Recomputes the exact full gradient (charged to the audit accumulator, never
    to algorithmic counters) and evaluates ``||g - grad f(y)||`` against
    ``(eta_k/2)||R(y)|| + iota0*delta_k``, plus the rearranged inequality that
    bounds the error by the true reduced gradient.
    """
    if params.variant is not Variant.FINITE_SUM:
        raise ValueError("deterministic audits apply to the finite-sum condition only")
    eta_k = params.eta.value(k)
    delta_k = params.delta.value(k)
    grad = problem.smooth.full_gradient(y)
    if audit_counters is not None:
        audit_counters.grad_evals += problem.smooth.sample_count
    error_norm = float(np.linalg.norm(g - grad))
    sampled_norm = float(np.linalg.norm(y - x_next)) / alpha
    x_hat = problem.nonsmooth.prox(alpha, y - alpha * grad)
    if audit_counters is not None:
        audit_counters.prox_evals += 1
    true_norm = float(np.linalg.norm(y - x_hat)) / alpha

    rhs = (eta_k / 2.0) * sampled_norm + params.iota0 * delta_k
    re_lhs = (1.0 - eta_k / 2.0) * error_norm
    re_rhs = (eta_k / 2.0) * true_norm + params.iota0 * delta_k
    return ConditionReport(
        k=k,
        error_norm=error_norm,
        condition_rhs=rhs,
        rearranged_lhs=re_lhs,
        rearranged_rhs=re_rhs,
        sampled_reduced_norm=sampled_norm,
        true_reduced_norm=true_norm,
        satisfied=error_norm <= rhs,
        rearranged_satisfied=re_lhs <= re_rhs,
    )


@dataclass(frozen=True)
class MonteCarloReport:
    """Replication study of the expectation-variant accuracy condition at fixed y."""

    replications: int
    empirical_mse: float
    mean_reduced_norm_sq: float
    mean_sample_size: float
    bound_rhs: Optional[float]
    holds_with_slack: Optional[bool]


def monte_carlo_condition(
    problem,
    strategy,
    y: np.ndarray,
    replications: int,
    alpha: float,
    k: int = 0,
    slack: float = 1.15,
) -> MonteCarloReport:
    """Estimate ``E||g - grad f(y)||^2`` over reseeded replications of a strategy.

    Each replication uses an RNG stream keyed by its index.  When the strategy
    carries condition parameters, the empirical mean-squared error is compared
    against ``(eta_k^2/4)||mean R||^2 + iota0^2 delta_k^2`` with the given
    multiplicative slack to absorb Monte Carlo noise.
    """
    if replications < 100:
        raise ValueError("need at least 100 replications")
    grad = problem.smooth.full_gradient(y)
    sq_errors = np.empty(replications)
    sizes = np.empty(replications)
    r_sum = np.zeros_like(np.asarray(y, dtype=float))
    for rep in range(replications):
        inst = strategy.reseeded(rep)
        inst.reset(problem)
        est = inst.estimate(problem, y, k, alpha, None)
        sq_errors[rep] = float(np.sum((est.g - grad) ** 2))
        sizes[rep] = est.sample_size
        x_next = problem.nonsmooth.prox(alpha, y - alpha * est.g)
        r_sum += (y - x_next) / alpha
    empirical_mse = float(sq_errors.mean())
    mean_r = r_sum / replications
    mean_r_sq = float(np.sum(mean_r**2))

    params: Optional[ConditionParams] = getattr(strategy, "cond", None)
    rhs: Optional[float] = None
    holds: Optional[bool] = None
    if params is not None:
        eta_k = params.eta.value(k)
        delta_k = params.delta.value(k)
        rhs = (eta_k**2 / 4.0) * mean_r_sq + (params.iota0 * delta_k) ** 2
        holds = empirical_mse <= rhs * slack
    return MonteCarloReport(
        replications=replications,
        empirical_mse=empirical_mse,
        mean_reduced_norm_sq=mean_r_sq,
        mean_sample_size=float(sizes.mean()),
        bound_rhs=rhs,
        holds_with_slack=holds,
    )


# ---------------------------------------------------------------------------
# Offline per-sample statistics
# ---------------------------------------------------------------------------


def _deviation_norms(objective, y: np.ndarray, chunk: int = 4096) -> np.ndarray:
    grad = objective.full_gradient(y)
    n = objective.sample_count
    out = np.empty(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        rows = objective.sample_gradients(y, idx)
        out[idx] = np.linalg.norm(rows - grad, axis=1)
    return out


def exact_sample_variance(objective, y: np.ndarray) -> float:
    """Population variance ``(1/N) sum_i ||grad_i(y) - grad(y)||^2`` computed offline."""
    norms = _deviation_norms(objective, y)
    return float(np.mean(norms**2))


def max_sample_deviation(objective, y: np.ndarray) -> float:
    """Exact ``max_i ||grad_i(y) - grad(y)||`` at one point; audit-grade."""
    return float(np.max(_deviation_norms(objective, y)))

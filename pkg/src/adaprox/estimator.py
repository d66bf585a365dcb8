"""Gradient estimation under the five sampling strategies.

The adaptive strategies size their sample sets so the estimation error stays
below a multiple of the (reduced) gradient norm plus a decaying slack -- the
norm-test family of accuracy conditions.  Two sizing rules are implemented:
an i.i.d. rule driven by the second moment of the per-sample gradients, and a
worst-case subset rule for finite sums sampled without replacement.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .metrics import EvalCounters
    from .problems import CompositeProblem

__all__ = [
    "Variant",
    "EtaSchedule",
    "DeltaSchedule",
    "ZeroDelta",
    "PowerDelta",
    "GeometricDelta",
    "ConditionParams",
    "VarianceEstimate",
    "EstimateDiagnostics",
    "GradientEstimate",
    "SamplingStrategy",
    "FullBatch",
    "ConstantBatch",
    "GeometricGrowth",
    "AdaptiveUnbiased",
    "AdaptiveNested",
    "unbiased_sample_size",
    "finite_sum_sample_size",
    "update_variance",
    "estimate_gradient",
]

VARIANCE_FLOOR = 1e-12


class Variant(enum.Enum):
    """Whether the dataset is treated as a finite sum or as a uniform expectation."""

    FINITE_SUM = "finite-sum"
    EXPECTATION = "expectation"


# ---------------------------------------------------------------------------
# Accuracy-control schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtaSchedule:
    """Relative accuracy factor ``eta_k = eta_hat / (k+1)**exponent``, in [0, 1)."""

    eta_hat: float
    exponent: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta_hat < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if self.exponent < 0.0:
            raise ValueError("eta exponent must be nonnegative")

    @staticmethod
    def constant(eta: float) -> "EtaSchedule":
        return EtaSchedule(eta, 0.0)

    @staticmethod
    def power(eta_hat: float, exponent: float) -> "EtaSchedule":
        return EtaSchedule(eta_hat, exponent)

    def value(self, k: int) -> float:
        if self.exponent == 0.0:
            return self.eta_hat
        return self.eta_hat / (k + 1) ** self.exponent


class DeltaSchedule:
    """Nonincreasing, nonnegative slack sequence."""

    def value(self, k: int) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroDelta(DeltaSchedule):
    def value(self, k: int) -> float:
        return 0.0


@dataclass(frozen=True)
class PowerDelta(DeltaSchedule):
    """``delta_k = scale / (k+1)**exponent``."""

    exponent: float
    scale: float = 1.0

    def __post_init__(self):
        if self.exponent <= 0.0:
            raise ValueError("power-decay exponent must be positive")
        if self.scale < 0.0:
            raise ValueError("scale must be nonnegative")

    def value(self, k: int) -> float:
        return self.scale / (k + 1) ** self.exponent


@dataclass(frozen=True)
class GeometricDelta(DeltaSchedule):
    """``delta_k = ratio**k`` with ratio in [0, 1)."""

    ratio: float

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError("geometric ratio must lie in [0, 1)")

    def value(self, k: int) -> float:
        return self.ratio**k


@dataclass(frozen=True)
class ConditionParams:
    """Constants of the accuracy condition tying estimate error to the reduced gradient."""

    variant: Variant
    eta: EtaSchedule
    iota0: float
    delta: DeltaSchedule

    def __post_init__(self):
        if self.iota0 < 0.0:
            raise ValueError("iota0 must be nonnegative")


@dataclass(frozen=True)
class VarianceEstimate:
    """Per-sample gradient dispersion, either user-supplied or tracked on the fly."""

    sigma_sq: float
    known_mode: bool
    floor: float = VARIANCE_FLOOR

    @staticmethod
    def known(sigma_sq: float) -> "VarianceEstimate":
        if sigma_sq < 0.0:
            raise ValueError("sigma_sq must be nonnegative")
        return VarianceEstimate(sigma_sq, True)

    @staticmethod
    def running(floor: float = VARIANCE_FLOOR, initial: float = 0.0) -> "VarianceEstimate":
        return VarianceEstimate(max(initial, 0.0), False, floor)


def update_variance(
    est: VarianceEstimate, sample_gradients: np.ndarray, g: np.ndarray
) -> VarianceEstimate:
    """Refresh a running dispersion estimate from the current sample set.

    Uses the unbiased sample variance of the per-sample gradients around their
    mean, floored to avoid division blow-ups when the spread collapses; known
    estimates pass through unchanged, as do updates from fewer than two samples.
    """
    if est.known_mode:
        return est
    m = sample_gradients.shape[0]
    if m < 2:
        return est
    deviations = sample_gradients - g
    total = float(np.sum(deviations * deviations))
    sigma_sq = max(total / (m - 1), est.floor)
    return replace(est, sigma_sq=sigma_sq)


# ---------------------------------------------------------------------------
# Sample-size rules
# ---------------------------------------------------------------------------


def unbiased_sample_size(
    sigma_sq: float,
    eta_k: float,
    r_norm_sq: float,
    iota0: float,
    delta_k: float,
    max_batch: int,
) -> tuple[int, tuple[str, ...]]:
    """I.i.d. sample count so the expected squared error meets the accuracy condition.

    ``ceil(sigma_sq / ((eta_k^2/4) * r_norm_sq + iota0^2 * delta_k^2))``,
    clamped to ``[1, max_batch]``.  A zero denominator with positive variance
    is reported via a ``capped`` flag rather than treated as a failure.
    """
    if sigma_sq < 0 or r_norm_sq < 0:
        raise ValueError("variance and squared norms must be nonnegative")
    if max_batch < 1:
        raise ValueError("max_batch must be positive")
    if sigma_sq == 0.0:
        return 1, ()
    denominator = (eta_k**2 / 4.0) * r_norm_sq + (iota0 * delta_k) ** 2
    if denominator == 0.0:
        return max_batch, ("capped",)
    size = math.ceil(sigma_sq / denominator)
    if size > max_batch:
        return max_batch, ("capped",)
    return max(size, 1), ()


def finite_sum_sample_size(
    n: int,
    sigma: float,
    eta_k: float,
    r_norm: float,
    iota0: float,
    delta_k: float,
) -> tuple[int, tuple[str, ...]]:
    """Worst-case subset size for a finite sum sampled without replacement.

    ``ceil(n / (1 + (eta_k*r_norm + 2*iota0*delta_k) / (2*sigma)))``, clamped
    to ``[1, n]``.  With ``sigma = 0`` the bound degenerates; the full batch is
    returned with an ``exact`` flag (the safe choice).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if sigma < 0 or r_norm < 0:
        raise ValueError("sigma and norms must be nonnegative")
    if sigma == 0.0:
        return n, ("exact",)
    slack = (eta_k * r_norm + 2.0 * iota0 * delta_k) / (2.0 * sigma)
    size = math.ceil(n / (1.0 + slack))
    return min(max(size, 1), n), ()


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


@dataclass
class EstimateDiagnostics:
    """Controller telemetry for one gradient estimate."""

    target_size: int
    augmentations: int
    sigma_sq: float
    denominator: float
    evals: int
    flags: tuple[str, ...] = ()


@dataclass
class GradientEstimate:
    g: np.ndarray
    sample_size: int
    diagnostics: EstimateDiagnostics


class SamplingStrategy:
    """Produces per-iteration gradient estimates; one instance owns one run's state."""

    rng_seed: int = 0

    def reset(self, problem: "CompositeProblem") -> None:
        """Bind to a run; clears any per-run state."""

    def reseeded(self, seed: int) -> "SamplingStrategy":
        """Fresh copy with a new seed; used for replication studies."""
        clone = replace(self, rng_seed=seed)
        return clone

    def estimate(
        self,
        problem: "CompositeProblem",
        y: np.ndarray,
        k: int,
        alpha: float,
        counters: Optional["EvalCounters"] = None,
    ) -> GradientEstimate:
        raise NotImplementedError

    def _rng(self, k: int) -> np.random.Generator:
        # Streams keyed by (seed, iteration) so augmentation draws stay fresh
        # and replications are independent of iteration order.
        return np.random.default_rng([self.rng_seed, k])


def estimate_gradient(
    strategy: SamplingStrategy,
    problem: "CompositeProblem",
    y: np.ndarray,
    k: int,
    alpha: float,
    counters: Optional["EvalCounters"] = None,
) -> GradientEstimate:
    """Delegate to the strategy; every per-sample gradient call is charged to ``counters``."""
    return strategy.estimate(problem, y, k, alpha, counters)


def _charge(counters: Optional["EvalCounters"], amount: int) -> None:
    if counters is not None:
        counters.grad_evals += amount


@dataclass
class FullBatch(SamplingStrategy):
    """Exact gradient; charges one per-sample evaluation for every data point."""

    rng_seed: int = 0

    def estimate(self, problem, y, k, alpha, counters=None) -> GradientEstimate:
        n = problem.smooth.sample_count
        g = problem.smooth.full_gradient(y)
        _charge(counters, n)
        diag = EstimateDiagnostics(n, 0, 0.0, 0.0, evals=n)
        return GradientEstimate(g, n, diag)


@dataclass
class ConstantBatch(SamplingStrategy):
    """Fixed-size i.i.d. batches drawn with replacement."""

    batch: int = 256
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch size must be positive")

    def estimate(self, problem, y, k, alpha, counters=None) -> GradientEstimate:
        n = problem.smooth.sample_count
        flags: tuple[str, ...] = ()
        m = self.batch
        if m > n:
            m, flags = n, ("capped",)
        idx = self._rng(k).integers(0, n, size=m)
        g = problem.smooth.mean_gradient(y, idx)
        _charge(counters, m)
        diag = EstimateDiagnostics(m, 0, 0.0, 0.0, evals=m, flags=flags)
        return GradientEstimate(g, m, diag)


@dataclass
class GeometricGrowth(SamplingStrategy):
    """Batches drawn with replacement whose size grows by a fixed factor per iteration."""

    b0: int = 32
    growth: float = 1.05
    rng_seed: int = 0
    _size: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.b0 < 1:
            raise ValueError("initial batch size must be positive")
        if self.growth <= 1.0:
            raise ValueError("growth factor must exceed 1")

    def reset(self, problem) -> None:
        self._size = 0

    def estimate(self, problem, y, k, alpha, counters=None) -> GradientEstimate:
        n = problem.smooth.sample_count
        self._size = self.b0 if self._size == 0 else math.ceil(self.growth * self._size)
        flags: tuple[str, ...] = ()
        m = self._size
        if m >= n:
            m, flags = n, ("capped",)
            self._size = n  # hold at the dataset size once reached
        idx = self._rng(k).integers(0, n, size=m)
        g = problem.smooth.mean_gradient(y, idx)
        _charge(counters, m)
        diag = EstimateDiagnostics(m, 0, 0.0, 0.0, evals=m, flags=flags)
        return GradientEstimate(g, m, diag)


@dataclass
class _AdaptiveBase(SamplingStrategy):
    """Fixed-point sample sizing against the accuracy condition.

    Starting from the previous iteration's size, the controller draws a sample,
    forms the estimate and a candidate reduced gradient, evaluates the target
    size from the sizing rule, and augments the sample until the target is met
    or the augmentation budget runs out.
    """

    cond: ConditionParams = None  # type: ignore[assignment]
    variance: VarianceEstimate = None  # type: ignore[assignment]
    rng_seed: int = 0
    initial_size: int = 32
    max_augmentations: int = 5
    max_batch: Optional[int] = None
    _prev_size: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.cond is None:
            raise ValueError("adaptive strategies need accuracy-condition parameters")
        if self.variance is None:
            self.variance = VarianceEstimate.running()
        if self.initial_size < 1:
            raise ValueError("initial size must be positive")
        if self.max_augmentations < 0:
            raise ValueError("augmentation budget must be nonnegative")

    nested = False

    def reset(self, problem) -> None:
        self._prev_size = 0

    def reseeded(self, seed: int) -> "SamplingStrategy":
        clone = replace(self, rng_seed=seed)
        clone._prev_size = 0
        return clone

    # -- index management -------------------------------------------------

    def _initial_indices(self, rng, n: int, m: int) -> np.ndarray:
        raise NotImplementedError

    def _extend_indices(self, rng, n: int, current: np.ndarray, extra: int) -> np.ndarray:
        raise NotImplementedError

    # -- sizing -----------------------------------------------------------

    def _target_size(self, r_norm: float, eta_k: float, delta_k: float, n: int, cap: int):
        if self.cond.variant is Variant.FINITE_SUM:
            sigma = math.sqrt(self.variance.sigma_sq)
            return finite_sum_sample_size(n, sigma, eta_k, r_norm, self.cond.iota0, delta_k)
        return unbiased_sample_size(
            self.variance.sigma_sq, eta_k, r_norm**2, self.cond.iota0, delta_k, cap
        )

    def estimate(self, problem, y, k, alpha, counters=None) -> GradientEstimate:
        n = problem.smooth.sample_count
        cap = min(self.max_batch or n, n)
        eta_k = self.cond.eta.value(k)
        delta_k = self.cond.delta.value(k)
        rng = self._rng(k)

        m = self._prev_size if self._prev_size > 0 else min(self.initial_size, cap)
        evals = 0
        augmentations = 0
        flags: set[str] = set()

        exact_cap = (
            self.cond.variant is Variant.EXPECTATION and not self.nested and cap == n
        )
        if exact_cap and m >= n:
            # The dataset is finite: once the controller demands the whole of
            # it, the uniform expectation is computed exactly at the same cost
            # as drawing it, and the accuracy condition holds with zero error.
            return self._exact_estimate(problem, y, counters, evals, flags | {"capped"})

        idx = self._initial_indices(rng, n, m)
        grads = problem.smooth.sample_gradients(y, idx)
        evals += len(idx)
        _charge(counters, len(idx))
        g = grads.mean(axis=0)
        self.variance = update_variance(self.variance, grads, g)

        denominator = 0.0
        target = len(idx)
        for _ in range(self.max_augmentations + 1):
            r = (y - problem.nonsmooth.prox(alpha, y - alpha * g)) / alpha
            r_norm = float(np.linalg.norm(r))
            denominator = (eta_k**2 / 4.0) * r_norm**2 + (self.cond.iota0 * delta_k) ** 2
            target, size_flags = self._target_size(r_norm, eta_k, delta_k, n, cap)
            flags.update(size_flags)
            if target <= len(idx) or augmentations >= self.max_augmentations:
                break
            if exact_cap and target >= n:
                return self._exact_estimate(
                    problem, y, counters, evals, flags | {"capped"}, augmentations + 1
                )
            extra = min(target, cap) - len(idx)
            if extra <= 0:
                break
            new_idx = self._extend_indices(rng, n, idx, extra)
            new_grads = problem.smooth.sample_gradients(y, new_idx)
            evals += len(new_idx)
            _charge(counters, len(new_idx))
            idx = np.concatenate([idx, new_idx])
            grads = np.vstack([grads, new_grads])
            g = grads.mean(axis=0)
            self.variance = update_variance(self.variance, grads, g)
            augmentations += 1

        if self.nested:
            self._set = idx
        self._prev_size = len(idx)
        diag = EstimateDiagnostics(
            target_size=target,
            augmentations=augmentations,
            sigma_sq=self.variance.sigma_sq,
            denominator=denominator,
            evals=evals,
            flags=tuple(sorted(flags)),
        )
        return GradientEstimate(g, len(idx), diag)

    def _exact_estimate(
        self, problem, y, counters, prior_evals: int, flags, augmentations: int = 0
    ) -> GradientEstimate:
        n = problem.smooth.sample_count
        g = problem.smooth.full_gradient(y)
        _charge(counters, n)
        self._prev_size = n
        diag = EstimateDiagnostics(
            target_size=n,
            augmentations=augmentations,
            sigma_sq=self.variance.sigma_sq,
            denominator=0.0,
            evals=prior_evals + n,
            flags=tuple(sorted(flags)),
        )
        return GradientEstimate(g, n, diag)


@dataclass
class AdaptiveUnbiased(_AdaptiveBase):
    """Condition-controlled sizing with sample sets drawn fresh each iteration.

    Expectation variant: i.i.d. draws with replacement, independent across
    iterations.  Finite-sum variant: uniform subsets without replacement sized
    by the worst-case rule.
    """

    nested = False

    def _initial_indices(self, rng, n, m):
        if self.cond.variant is Variant.EXPECTATION:
            return rng.integers(0, n, size=m)
        self._perm = rng.permutation(n)
        return self._perm[:m]

    def _extend_indices(self, rng, n, current, extra):
        if self.cond.variant is Variant.EXPECTATION:
            return rng.integers(0, n, size=extra)
        start = len(current)
        return self._perm[start : start + extra]


@dataclass
class AdaptiveNested(_AdaptiveBase):
    """Condition-controlled sizing with nested sample sets (each extends the last).

    Reusing earlier indices makes the estimate biased; sets are subsets of the
    dataset, so sizes are capped at the dataset size.
    """

    nested = True
    _set: Optional[np.ndarray] = field(default=None, repr=False)

    def reset(self, problem) -> None:
        self._prev_size = 0
        self._set = None

    def reseeded(self, seed: int) -> "SamplingStrategy":
        clone = replace(self, rng_seed=seed)
        clone._prev_size = 0
        clone._set = None
        return clone

    def _initial_indices(self, rng, n, m):
        if self._set is None:
            self._perm = rng.permutation(n)
            return self._perm[:m]
        self._perm = rng.permutation(n)
        return self._set

    def _extend_indices(self, rng, n, current, extra):
        mask = ~np.isin(self._perm, current, assume_unique=True)
        fresh = self._perm[mask]
        return fresh[:extra]

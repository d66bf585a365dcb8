"""Proximal gradient and accelerated proximal gradient solver with theorem presets.

The iteration is ``x_{k+1} = prox(alpha, y_k - alpha * g_k)`` where ``g_k``
comes from a sampling strategy.  Option I sets ``y_{k+1} = x_{k+1}``; Option II
adds momentum ``y_{k+1} = x_{k+1} + beta_{k+1} (x_{k+1} - x_k)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimator import (
    ConditionParams,
    EtaSchedule,
    GeometricDelta,
    PowerDelta,
    SamplingStrategy,
    Variant,
    ZeroDelta,
    estimate_gradient,
)
from .metrics import EvalCounters, IterationRecord
from .problems import CompositeProblem
from .prox import prox_step
from .verify import ConditionReport, audit_condition

__all__ = [
    "AccelerationSchedule",
    "ConvexNesterov",
    "StrongConvexConstant",
    "FixedBeta",
    "StepSchedule",
    "SolverConfig",
    "RunResult",
    "DivergedError",
    "InvalidConfigError",
    "PRESET_NAMES",
    "PresetConfig",
    "preset_config",
    "run",
]


class InvalidConfigError(ValueError):
    """A solver configuration violates the hypotheses it claims to satisfy."""


class DivergedError(RuntimeError):
    """Iterates left the finite range; carries the partial result."""

    def __init__(self, result: "RunResult"):
        super().__init__(f"diverged at iteration {result.records[-1].k}")
        self.result = result


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


class AccelerationSchedule:
    """Momentum coefficient sequence ``beta_k`` for the Option II update, ``k >= 1``."""

    def beta(self, k: int) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ConvexNesterov(AccelerationSchedule):
    """``beta_k = (k-1)/(k+2)``; the classical choice for merely convex objectives."""

    def beta(self, k: int) -> float:
        if k < 1:
            raise ValueError("momentum is defined for k >= 1")
        return (k - 1) / (k + 2)


@dataclass(frozen=True)
class StrongConvexConstant(AccelerationSchedule):
    """Constant momentum ``(1-theta)/(1+theta)`` with ``theta = sqrt(mu*alpha)``."""

    mu: float
    alpha: float

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidConfigError("constant momentum needs strong convexity (mu > 0)")
        if self.alpha <= 0 or self.mu * self.alpha > 1.0:
            raise InvalidConfigError("need 0 < mu * alpha <= 1 for theta in (0, 1]")

    @property
    def theta(self) -> float:
        return math.sqrt(self.mu * self.alpha)

    def beta(self, k: int) -> float:
        theta = self.theta
        return (1.0 - theta) / (1.0 + theta)


@dataclass(frozen=True)
class FixedBeta(AccelerationSchedule):
    """User-pinned constant momentum coefficient."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value < 1.0:
            raise InvalidConfigError("fixed momentum must lie in [0, 1)")

    def beta(self, k: int) -> float:
        return self.value


@dataclass(frozen=True)
class StepSchedule:
    """Constant step size; theorem presets emit values within their bounds."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidConfigError("step size must be positive")

    def value(self, k: int) -> float:
        return self.alpha


# ---------------------------------------------------------------------------
# Run configuration and result
# ---------------------------------------------------------------------------


@dataclass
class SolverConfig:
    option: str = "I"
    alpha: float = 1.0
    acceleration: Optional[AccelerationSchedule] = None
    max_iters: int = 10_000
    grad_budget: int = 100_000_000
    eps_target: Optional[float] = None
    x0: Optional[np.ndarray] = None
    audit: bool = False
    condition_params: Optional[ConditionParams] = None
    record_wall_time: bool = False

    def __post_init__(self):
        if self.option not in ("I", "II"):
            raise InvalidConfigError(f"option must be 'I' or 'II', got {self.option!r}")
        if self.alpha <= 0:
            raise InvalidConfigError("step size must be positive")
        if self.option == "II" and self.acceleration is None:
            raise InvalidConfigError("Option II requires an acceleration schedule")
        if self.max_iters < 0:
            raise InvalidConfigError("max_iters must be nonnegative")


@dataclass
class RunResult:
    records: list[IterationRecord]
    x: np.ndarray
    y: np.ndarray
    status: str  # target_reached | budget_exhausted | max_iters | diverged
    counters: EvalCounters
    audit_counters: EvalCounters
    audit_reports: list[ConditionReport] = field(default_factory=list)

    @property
    def final_gap(self) -> Optional[float]:
        return self.records[-1].gap


def run(
    problem: CompositeProblem,
    strategy: SamplingStrategy,
    config: SolverConfig,
) -> RunResult:
    """Execute one solver run; emits one record per iterate (``k=0`` is the start).

    Stops on the iteration cap, the gradient-evaluation budget, or when the
    optimality gap reaches ``eps_target`` (reference optimum required).  A
    non-finite iterate raises ``DivergedError`` carrying the finite prefix.
    """
    smooth = problem.smooth
    x = np.zeros(smooth.dim) if config.x0 is None else np.asarray(config.x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise InvalidConfigError("starting point must be finite")
    if config.option == "II" and isinstance(config.acceleration, StrongConvexConstant):
        if smooth.strong_convexity <= 0:
            raise InvalidConfigError("constant momentum needs a strongly convex problem")
    if config.eps_target is not None and problem.reference_optimum is None:
        raise InvalidConfigError("a gap target needs a reference optimum")

    y = x.copy()
    counters = EvalCounters()
    audit_counters = EvalCounters()
    strategy.reset(problem)

    started = time.perf_counter()
    clock = (lambda: time.perf_counter() - started) if config.record_wall_time else (lambda: 0.0)

    records = [
        IterationRecord(
            k=0,
            sample_size=0,
            prox_evals=0,
            grad_evals=0,
            phi=problem.phi(x),
            gap=problem.gap(x),
            reduced_grad_norm=float("nan"),
            wall_time_s=clock(),
        )
    ]
    reports: list[ConditionReport] = []
    status = "max_iters"

    def result(current_status: str) -> RunResult:
        return RunResult(records, x, y, current_status, counters, audit_counters, reports)

    for k in range(config.max_iters):
        est = estimate_gradient(strategy, problem, y, k, config.alpha, counters)
        x_next = prox_step(problem, config.alpha, y, est.g, counters)
        if not np.all(np.isfinite(x_next)):
            raise DivergedError(result("diverged"))
        reduced_norm = float(np.linalg.norm(y - x_next)) / config.alpha

        true_norm: Optional[float] = None
        if config.audit:
            params = config.condition_params or getattr(strategy, "cond", None)
            if params is not None and params.variant is Variant.FINITE_SUM:
                report = audit_condition(
                    problem, est.g, y, x_next, config.alpha, params, k, audit_counters
                )
                reports.append(report)
                true_norm = report.true_reduced_norm
            else:
                grad = smooth.full_gradient(y)
                audit_counters.grad_evals += smooth.sample_count
                x_hat = problem.nonsmooth.prox(config.alpha, y - config.alpha * grad)
                audit_counters.prox_evals += 1
                true_norm = float(np.linalg.norm(y - x_hat)) / config.alpha

        phi = problem.phi(x_next)
        if not np.isfinite(phi):
            raise DivergedError(result("diverged"))
        gap = problem.gap(x_next)
        records.append(
            IterationRecord(
                k=k + 1,
                sample_size=est.sample_size,
                prox_evals=counters.prox_evals,
                grad_evals=counters.grad_evals,
                phi=phi,
                gap=gap,
                reduced_grad_norm=reduced_norm,
                true_reduced_grad_norm=true_norm,
                wall_time_s=clock(),
                flags=";".join(est.diagnostics.flags),
            )
        )

        if config.option == "I":
            y = x_next.copy()
        else:
            beta = config.acceleration.beta(k + 1)
            y = x_next + beta * (x_next - x)
        x = x_next
        if not np.all(np.isfinite(y)):
            raise DivergedError(result("diverged"))

        if config.eps_target is not None and gap is not None and gap <= config.eps_target:
            status = "target_reached"
            break
        if counters.grad_evals >= config.grad_budget:
            status = "budget_exhausted"
            break

    return result(status)


# ---------------------------------------------------------------------------
# Theorem presets
# ---------------------------------------------------------------------------

PRESET_NAMES = (
    "NonconvexI",
    "ConvexI",
    "ConvexII",
    "ConvexI-Unbiased",
    "ConvexII-Unbiased",
    "StrongI",
    "StrongII",
    "StrongI-Unbiased",
    "StrongII-Unbiased",
)


@dataclass(frozen=True)
class PresetConfig:
    name: str
    option: str
    alpha: float
    params: ConditionParams
    acceleration: Optional[AccelerationSchedule]


def _require(ok: bool, inequality: str) -> None:
    if not ok:
        raise InvalidConfigError(f"violated hypothesis: {inequality}")


def _delta_geometric(delta: Optional[float], default: float):
    ratio = default if delta is None else float(delta)
    _require(0.0 <= ratio < 1.0, "0 <= delta < 1")
    return ZeroDelta() if ratio == 0.0 else GeometricDelta(ratio)


def _delta_power(exponent: float, scale: float):
    return ZeroDelta() if scale == 0.0 else PowerDelta(exponent, scale)


def preset_config(
    name: str,
    L: float,
    mu: float,
    *,
    eta: float = 0.0,
    iota0: float = 0.0,
    nu: float = 0.5,
    delta: Optional[float] = None,
    eta_hat: float = 0.1,
    delta_hat: float = 0.1,
) -> PresetConfig:
    """Largest admissible step size and matching schedules for a named regime.

    Plain presets target the finite-sum accuracy condition with possibly biased
    estimates; ``-Unbiased`` presets target the expectation condition with
    unbiased sample averages.  Every hypothesis inequality is re-validated, and
    violations name the inequality.
    """
    _require(L > 0, "L > 0")
    _require(mu >= 0, "mu >= 0")
    _require(nu > 0, "nu > 0")
    _require(iota0 >= 0, "iota0 >= 0")

    if name == "NonconvexI":
        _require(0.0 <= eta < 1.0, "0 <= eta < 1")
        _require(iota0 < math.sqrt((1.0 - eta) / 2.0), "iota0 < sqrt((1-eta)/2)")
        alpha = (1.0 - eta) / (2.0 * L)
        params = ConditionParams(
            Variant.FINITE_SUM,
            EtaSchedule.constant(eta),
            iota0,
            _delta_power(0.5 + nu, delta_hat),
        )
        return PresetConfig(name, "I", alpha, params, None)

    if name in ("ConvexI", "ConvexII"):
        _require(0.0 <= eta_hat < 0.5, "0 <= eta_hat < 1/2")
        _require(iota0**2 < 0.5 - eta_hat, "iota0^2 < 1/2 - eta_hat")
        alpha = (1.0 - 2.0 * (eta_hat + iota0**2)) / (2.0 * L)
        eta_schedule = EtaSchedule.power(eta_hat, 1.0)
        if name == "ConvexI":
            delta_schedule = _delta_power(1.0 + nu, delta_hat)
            accel: Optional[AccelerationSchedule] = None
            option = "I"
        else:
            delta_schedule = _delta_power(3.5, delta_hat)
            accel = ConvexNesterov()
            option = "II"
        params = ConditionParams(Variant.FINITE_SUM, eta_schedule, iota0, delta_schedule)
        return PresetConfig(name, option, alpha, params, accel)

    if name in ("ConvexI-Unbiased", "ConvexII-Unbiased"):
        _require(0.0 <= eta < 1.0, "0 <= eta < 1")
        _require(iota0**2 < 1.0 - eta, "iota0^2 < 1 - eta")
        alpha = (1.0 - eta - iota0**2) / L
        if name == "ConvexI-Unbiased":
            delta_schedule = _delta_power((1.0 + nu) / 2.0, delta_hat)
            accel = None
            option = "I"
        else:
            delta_schedule = _delta_power((3.0 + 2.0 * nu) / 2.0, delta_hat)
            accel = ConvexNesterov()
            option = "II"
        params = ConditionParams(Variant.EXPECTATION, EtaSchedule.constant(eta), iota0, delta_schedule)
        return PresetConfig(name, option, alpha, params, accel)

    if name in ("StrongI", "StrongII", "StrongI-Unbiased", "StrongII-Unbiased"):
        _require(mu > 0, "mu > 0 (strongly convex presets refuse mu = 0)")

    if name == "StrongI":
        _require(0.0 <= eta < 0.5, "0 <= eta < 1/2")
        alpha = (1.0 - 4.0 * eta**2) / (2.0 * L)
        params = ConditionParams(
            Variant.FINITE_SUM, EtaSchedule.constant(eta), iota0, _delta_geometric(delta, 0.0)
        )
        return PresetConfig(name, "I", alpha, params, None)

    if name == "StrongII":
        c_hat = (mu / 4.0) * (1.0 - math.sqrt(mu / L))
        eta_cap = math.sqrt(c_hat / (4.0 * (L + c_hat))) if c_hat > 0 else 0.0
        _require(eta <= eta_cap, "eta <= sqrt(c_hat / (4 (L + c_hat)))")
        alpha = 1.0 / (2.0 * (L + c_hat))
        params = ConditionParams(
            Variant.FINITE_SUM, EtaSchedule.constant(eta), iota0, _delta_geometric(delta, 0.0)
        )
        return PresetConfig(name, "II", alpha, params, StrongConvexConstant(mu, alpha))

    if name == "StrongI-Unbiased":
        _require(0.0 <= eta < 1.0, "0 <= eta < 1")
        alpha = (2.0 - eta**2) / (2.0 * L)
        ratio_default = math.sqrt(max(1.0 - mu * alpha / 2.0, 0.0))
        params = ConditionParams(
            Variant.EXPECTATION,
            EtaSchedule.constant(eta),
            iota0,
            _delta_geometric(delta, ratio_default),
        )
        return PresetConfig(name, "I", alpha, params, None)

    if name == "StrongII-Unbiased":
        _require(0.0 <= eta < 1.0, "0 <= eta < 1")
        _require(iota0**2 <= eta or iota0 == 0.0, "iota0^2 in [0, eta)")
        alpha = (1.0 - eta - iota0**2) / L
        ratio_default = math.sqrt(max(1.0 - math.sqrt(mu * alpha) / 2.0, 0.0))
        params = ConditionParams(
            Variant.EXPECTATION,
            EtaSchedule.constant(eta),
            iota0,
            _delta_geometric(delta, ratio_default),
        )
        return PresetConfig(name, "II", alpha, params, StrongConvexConstant(mu, alpha))

    raise InvalidConfigError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")

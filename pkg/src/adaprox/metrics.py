"""Optimality measures, evaluation counters, per-iteration telemetry, and rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .problems import CompositeProblem

__all__ = [
    "EvalCounters",
    "IterationRecord",
    "InsufficientDataError",
    "CSV_HEADER",
    "records_to_csv",
    "records_from_csv",
    "write_csv",
    "read_csv",
    "reduced_gradient",
    "true_reduced_gradient",
    "fit_linear_rate",
    "fit_power_rate",
]

CSV_HEADER = (
    "k,sample_size,prox_evals,grad_evals,phi,gap,"
    "reduced_grad_norm,true_reduced_grad_norm,wall_time_s,flags"
)


class InsufficientDataError(ValueError):
    """Too few usable records in the requested fit window."""


@dataclass
class EvalCounters:
    """Cumulative algorithmic cost: proximal evaluations and per-sample gradient calls."""

    prox_evals: int = 0
    grad_evals: int = 0


@dataclass
class IterationRecord:
    """Telemetry for one iterate.

    ``k`` indexes the iterate (``k=0`` is the starting point, before any work);
    counter fields are cumulative.  ``gap`` and ``true_reduced_grad_norm`` are
    absent when no reference optimum / audit pass is available.
    """

    k: int
    sample_size: int
    prox_evals: int
    grad_evals: int
    phi: float
    gap: Optional[float]
    reduced_grad_norm: float
    true_reduced_grad_norm: Optional[float] = None
    wall_time_s: float = 0.0
    flags: str = ""


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _parse_opt(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def record_to_line(record: IterationRecord) -> str:
    return ",".join(
        [
            str(record.k),
            str(record.sample_size),
            str(record.prox_evals),
            str(record.grad_evals),
            _fmt(record.phi),
            _fmt(record.gap),
            _fmt(record.reduced_grad_norm),
            _fmt(record.true_reduced_grad_norm),
            _fmt(record.wall_time_s),
            record.flags,
        ]
    )


def record_from_line(line: str) -> IterationRecord:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 10:
        raise ValueError(f"expected 10 CSV fields, got {len(parts)}")
    return IterationRecord(
        k=int(parts[0]),
        sample_size=int(parts[1]),
        prox_evals=int(parts[2]),
        grad_evals=int(parts[3]),
        phi=float(parts[4]),
        gap=_parse_opt(parts[5]),
        reduced_grad_norm=float(parts[6]),
        true_reduced_grad_norm=_parse_opt(parts[7]),
        wall_time_s=float(parts[8]),
        flags=parts[9],
    )


def records_to_csv(records: Sequence[IterationRecord]) -> str:
    lines = [CSV_HEADER]
    lines.extend(record_to_line(r) for r in records)
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[IterationRecord]:
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    return [record_from_line(line) for line in lines[1:]]


def write_csv(path, records: Sequence[IterationRecord]) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write(records_to_csv(records))


def read_csv(path) -> list[IterationRecord]:
    with open(path, "r") as handle:
        return records_from_csv(handle.read())


# ---------------------------------------------------------------------------
# Optimality measures
# ---------------------------------------------------------------------------


def reduced_gradient(alpha: float, y: np.ndarray, x_next: np.ndarray) -> np.ndarray:
    """Step-normalized displacement ``(y - x_next) / alpha`` of a prox-gradient step."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return (np.asarray(y) - np.asarray(x_next)) / alpha


def true_reduced_gradient(
    problem: "CompositeProblem",
    alpha: float,
    y: np.ndarray,
    audit_counters: Optional[EvalCounters] = None,
) -> np.ndarray:
    """Reduced gradient computed with the exact full gradient.

    A zero norm certifies stationarity of the composite objective at ``y``.
    Audit-only: the cost is charged to a separate accumulator, never to the
    solver's algorithmic counters.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    grad = problem.smooth.full_gradient(y)
    if audit_counters is not None:
        audit_counters.grad_evals += problem.smooth.sample_count
    x_hat = problem.nonsmooth.prox(alpha, y - alpha * grad)
    if audit_counters is not None:
        audit_counters.prox_evals += 1
    return (y - x_hat) / alpha


# ---------------------------------------------------------------------------
# Rate diagnostics
# ---------------------------------------------------------------------------


def _windowed_gaps(records: Sequence[IterationRecord], window) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = window
    ks, gaps = [], []
    for record in records:
        if record.k < lo or record.k > hi:
            continue
        if record.gap is None or record.gap <= 0:
            continue  # nonpositive gaps carry no log information
        ks.append(record.k)
        gaps.append(record.gap)
    if len(ks) < 10:
        raise InsufficientDataError(
            f"need at least 10 positive-gap records in window {window}, found {len(ks)}"
        )
    return np.asarray(ks, dtype=float), np.asarray(gaps, dtype=float)


def _least_squares_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def fit_linear_rate(records: Sequence[IterationRecord], window) -> tuple[float, float]:
    """Geometric decay estimate: slope of ``log(gap)`` against ``k``.

    Returns ``(rho_hat, r2)`` with ``rho_hat = exp(slope)``; a value near one
    flags sequences that are not linearly convergent over the window.
    """
    ks, gaps = _windowed_gaps(records, window)
    slope, r2 = _least_squares_slope(ks, np.log(gaps))
    return float(np.exp(slope)), r2


def fit_power_rate(records: Sequence[IterationRecord], window) -> tuple[float, float]:
    """Power-law decay estimate: slope of ``log(gap)`` against ``log(k)``.

    Returns ``(p_hat, r2)`` with ``p_hat = -slope``; records with ``k < 1`` are
    skipped since they carry no log-abscissa.
    """
    ks, gaps = _windowed_gaps(records, (max(window[0], 1), window[1]))
    slope, r2 = _least_squares_slope(np.log(ks), np.log(gaps))
    return -slope, r2

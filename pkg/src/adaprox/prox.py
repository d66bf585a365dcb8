"""Exact proximal operators for the supported nonsmooth terms.

All operators return the unique minimizer of ``h(p) + ||p - y||^2 / (2*alpha)``
for their respective ``h``.  Indicator proximal maps reduce to Euclidean
projections and are independent of ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .metrics import EvalCounters
    from .problems import CompositeProblem

__all__ = ["ProxRequest", "prox_l1", "prox_ball", "prox_box", "prox_step"]


@dataclass(frozen=True)
class ProxRequest:
    """A single proximal evaluation request: step size and center point."""

    alpha: float
    y: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"prox step size must be positive, got {self.alpha}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("prox center must be finite")


def prox_l1(alpha: float, lam: float, y: np.ndarray) -> np.ndarray:
    """Soft-thresholding: coordinatewise minimizer of ``lam*|p| + (p-y)^2/(2*alpha)``.

    Coordinates with ``|y_j| <= alpha*lam`` map to exactly zero, including the
    tie at the kink.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - alpha * lam, 0.0)


def prox_ball(radius: float, y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the ball ``||p|| <= radius``.

    Points with ``||y|| <= radius`` (boundary included) are returned unchanged,
    so repeated application is an exact fixed point.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    y = np.asarray(y, dtype=float)
    norm = float(np.linalg.norm(y))
    if norm <= radius:
        return y.copy()
    p = y * (radius / norm)
    # Rounding can leave the computed norm a few ulps outside the ball; deflate
    # until the feasibility test itself passes so a second projection is a no-op.
    while float(np.linalg.norm(p)) > radius:
        scale = radius / float(np.linalg.norm(p))
        if scale >= 1.0:
            scale = np.nextafter(1.0, 0.0)
        p = p * scale
    return p


def prox_box(lower: np.ndarray, upper: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Componentwise clamp of ``y`` into ``[lower, upper]``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("box lower bound exceeds upper bound")
    return np.minimum(np.maximum(np.asarray(y, dtype=float), lower), upper)


def prox_step(
    problem: "CompositeProblem",
    alpha: float,
    y: np.ndarray,
    g: np.ndarray,
    counters: Optional["EvalCounters"] = None,
) -> np.ndarray:
    """One proximal-gradient step ``prox(alpha, y - alpha*g)``.

    Increments the proximal-evaluation counter by exactly one when an
    accumulator is supplied.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    out = problem.nonsmooth.prox(alpha, y - alpha * g)
    if counters is not None:
        counters.prox_evals += 1
    return out

"""Composite problem instances: smooth finite-sum objectives plus a simple nonsmooth term.

Two concrete families are provided: a synthetic ball-constrained strongly
convex quadratic, and l1-regularized logistic regression over LIBSVM-format
datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .prox import prox_ball, prox_box, prox_l1

__all__ = [
    "SmoothObjective",
    "QuadraticObjective",
    "LogisticObjective",
    "NonsmoothTerm",
    "Zero",
    "L1",
    "BallIndicator",
    "BoxIndicator",
    "CompositeProblem",
    "DatasetFormatError",
    "generate_quadratic",
    "load_libsvm",
    "make_logistic",
    "save_quadratic",
    "load_quadratic",
]


class DatasetFormatError(ValueError):
    """Malformed or non-binary dataset file; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


# ---------------------------------------------------------------------------
# Nonsmooth terms
# ---------------------------------------------------------------------------


class NonsmoothTerm:
    """Convex, closed, proper term with an exact proximal operator."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(NonsmoothTerm):
    def value(self, x: np.ndarray) -> float:
        return 0.0

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float).copy()


@dataclass(frozen=True)
class L1(NonsmoothTerm):
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("l1 weight must be nonnegative")

    def value(self, x: np.ndarray) -> float:
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return prox_l1(alpha, self.weight, y)


@dataclass(frozen=True)
class BallIndicator(NonsmoothTerm):
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def value(self, x: np.ndarray) -> float:
        return 0.0 if float(np.linalg.norm(x)) <= self.radius else np.inf

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return prox_ball(self.radius, y)


@dataclass(frozen=True)
class BoxIndicator(NonsmoothTerm):
    lower: tuple
    upper: tuple

    @staticmethod
    def of(lower: Sequence[float], upper: Sequence[float]) -> "BoxIndicator":
        return BoxIndicator(tuple(float(v) for v in lower), tuple(float(v) for v in upper))

    def __post_init__(self):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("invalid box bounds")

    def value(self, x: np.ndarray) -> float:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        inside = np.all(x >= lo) and np.all(x <= hi)
        return 0.0 if inside else np.inf

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return prox_box(np.asarray(self.lower), np.asarray(self.upper), y)


# ---------------------------------------------------------------------------
# Smooth objectives
# ---------------------------------------------------------------------------


class SmoothObjective:
    """Smooth part of a composite objective: the mean of per-sample functions.

    Subclasses provide values and gradients; the full gradient must equal the
    arithmetic mean of the per-sample gradients.  ``smoothness`` is a Lipschitz
    constant of the gradient and ``strong_convexity`` a lower curvature bound
    (zero for merely convex objectives).
    """

    dim: int
    sample_count: int
    smoothness: float
    strong_convexity: float

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_gradients(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Per-sample gradients as a ``(len(indices), dim)`` matrix."""
        raise NotImplementedError

    def sample_gradient(self, x: np.ndarray, index: int) -> np.ndarray:
        return self.sample_gradients(x, np.asarray([index]))[0]

    def mean_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        return self.sample_gradients(x, indices).mean(axis=0)


class QuadraticObjective(SmoothObjective):
    """Mean of per-sample quadratics with diagonal curvature.

    Sample ``i`` contributes ``0.5 * x^T diag(q_i) x + b_i^T x``; the mean
    matrix is diagonal, so the extreme eigenvalues are read directly off it.
    """

    def __init__(self, diagonals: np.ndarray, linear: np.ndarray):
        diagonals = np.asarray(diagonals, dtype=float)
        linear = np.asarray(linear, dtype=float)
        if diagonals.ndim != 2 or diagonals.shape != linear.shape:
            raise ValueError("diagonals and linear terms must be matching (N, d) arrays")
        if np.any(diagonals <= 0):
            raise ValueError("per-sample diagonals must be positive")
        self.diagonals = diagonals
        self.linear = linear
        self.sample_count, self.dim = diagonals.shape
        self.mean_diagonal = diagonals.mean(axis=0)
        self.mean_linear = linear.mean(axis=0)
        self.smoothness = float(self.mean_diagonal.max())
        self.strong_convexity = float(self.mean_diagonal.min())

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.mean_diagonal * x) + self.mean_linear @ x)

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.mean_diagonal * x + self.mean_linear

    def sample_gradients(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices)
        return self.diagonals[idx] * x + self.linear[idx]

    def deviation_bound(self, radius: float) -> float:
        """Certified bound on ``max_i ||grad_i(x) - grad(x)||`` over ``||x|| <= radius``.

        Uses the diagonal operator norm of each centered curvature matrix, so
        the bound is valid at every point of the ball, not just at one iterate.
        """
        op_norms = np.abs(self.diagonals - self.mean_diagonal).max(axis=1)
        b_devs = np.linalg.norm(self.linear - self.mean_linear, axis=1)
        return float(np.max(op_norms * radius + b_devs))


def _power_iteration_lmax(gram_matvec, dim: int, tol: float = 1e-6, max_iters: int = 500) -> float:
    """Largest eigenvalue of a PSD operator given its matvec, by power iteration."""
    v = np.ones(dim) / np.sqrt(dim)
    lam = 0.0
    for _ in range(max_iters):
        w = gram_matvec(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ gram_matvec(v))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


class LogisticObjective(SmoothObjective):
    """Mean logistic loss over rows of a sparse feature matrix with +/-1 labels."""

    def __init__(self, features: sp.csr_matrix, labels: np.ndarray):
        labels = np.asarray(labels, dtype=float)
        if features.shape[0] != labels.shape[0]:
            raise ValueError("feature and label counts disagree")
        if features.shape[0] == 0:
            raise ValueError("empty dataset")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        self.features = features.tocsr()
        self.labels = labels
        self.sample_count, self.dim = features.shape
        gram = lambda v: self.features.T @ (self.features @ v)
        self.smoothness = _power_iteration_lmax(gram, self.dim) / (4.0 * self.sample_count)
        self.strong_convexity = 0.0

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.labels * (self.features @ x)

    def value(self, x: np.ndarray) -> float:
        return float(np.mean(np.logaddexp(0.0, -self._margins(x))))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        coef = -self.labels * expit(-self._margins(x))
        return (self.features.T @ coef) / self.sample_count

    def sample_gradients(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices)
        rows = self.features[idx]
        margins = self.labels[idx] * (rows @ x)
        coef = -self.labels[idx] * expit(-margins)
        return rows.multiply(coef[:, np.newaxis]).toarray()

    def mean_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices)
        rows = self.features[idx]
        margins = self.labels[idx] * (rows @ x)
        coef = -self.labels[idx] * expit(-margins)
        return (rows.T @ coef) / len(idx)


# ---------------------------------------------------------------------------
# Composite problem
# ---------------------------------------------------------------------------


@dataclass
class CompositeProblem:
    """Smooth finite-sum part plus a simple convex nonsmooth part."""

    smooth: SmoothObjective
    nonsmooth: NonsmoothTerm
    reference_optimum: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def phi(self, x: np.ndarray) -> float:
        return self.smooth.value(x) + self.nonsmooth.value(x)

    def gap(self, x: np.ndarray) -> Optional[float]:
        if self.reference_optimum is None:
            return None
        return self.phi(x) - self.reference_optimum


# ---------------------------------------------------------------------------
# Generators and dataset ingestion
# ---------------------------------------------------------------------------


def generate_quadratic(d: int, n: int, kappa: float, seed: int) -> CompositeProblem:
    """Ball-constrained strongly convex quadratic with a pinned condition number.

    Per-sample curvatures are diagonal with entries drawn log-uniformly on
    ``[1, kappa]``; the coordinates holding the extreme mean entries are then
    rescaled so the mean matrix has smallest eigenvalue 1 and largest ``kappa``.
    Linear terms are uniform on ``[0, 1]``.  Deterministic for a fixed seed.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if n < 1:
        raise ValueError("sample count must be positive")
    if kappa < 1:
        raise ValueError("condition number must be >= 1")
    rng = np.random.default_rng(seed)
    diagonals = np.exp(rng.uniform(0.0, np.log(kappa), size=(n, d)))
    means = diagonals.mean(axis=0)
    j_min = int(np.argmin(means))
    j_max = int(np.argmax(means))
    if j_min == j_max:  # all means equal (kappa == 1)
        j_min, j_max = 0, 1
    diagonals[:, j_min] /= means[j_min]
    diagonals[:, j_max] *= kappa / means[j_max]
    linear = rng.uniform(0.0, 1.0, size=(n, d))
    smooth = QuadraticObjective(diagonals, linear)
    meta = {"kind": "quadratic", "d": d, "n": n, "kappa": float(kappa), "seed": int(seed)}
    return CompositeProblem(smooth=smooth, nonsmooth=BallIndicator(1.0), meta=meta)


def load_libsvm(path: str):
    """Parse a LIBSVM-format text file of binary-labeled sparse rows.

    Returns ``(features, labels, d, n)`` where ``features`` is a CSR matrix
    with an all-ones bias column appended as the last coordinate, ``labels``
    are mapped to ``{-1, +1}`` (raw labels may be ``+1/-1`` or ``0/1``), and
    ``d`` counts the bias.  Feature indices must be 1-based and strictly
    ascending within each row.
    """
    raw_labels: list[float] = []
    data: list[float] = []
    col_idx: list[int] = []
    indptr: list[int] = [0]
    max_index = 0
    with open(path, "r") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise DatasetFormatError(f"unreadable label {parts[0]!r}", line_number) from None
            if label not in (-1.0, 0.0, 1.0):
                raise DatasetFormatError(f"non-binary label {parts[0]!r}", line_number)
            raw_labels.append(label)
            previous = 0
            for token in parts[1:]:
                idx_str, _, val_str = token.partition(":")
                try:
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise DatasetFormatError(f"malformed feature {token!r}", line_number) from None
                if idx < 1:
                    raise DatasetFormatError(f"feature index {idx} is not 1-based", line_number)
                if idx <= previous:
                    raise DatasetFormatError(f"feature index {idx} not ascending", line_number)
                previous = idx
                max_index = max(max_index, idx)
                col_idx.append(idx - 1)
                data.append(val)
            indptr.append(len(data))
    n = len(raw_labels)
    if n == 0:
        raise DatasetFormatError("empty dataset", 1)
    d = max_index + 1  # one extra coordinate for the bias feature
    features = sp.csr_matrix(
        (np.asarray(data), np.asarray(col_idx), np.asarray(indptr)), shape=(n, d)
    )
    bias = sp.csr_matrix(np.ones((n, 1)))
    features = sp.hstack([features[:, : d - 1], bias], format="csr")
    labels = np.where(np.asarray(raw_labels) > 0, 1.0, -1.0)
    return features, labels, d, n


def make_logistic(features: sp.csr_matrix, labels: np.ndarray) -> CompositeProblem:
    """l1-regularized logistic regression with regularization weight ``1/N``."""
    if features.shape[0] == 0:
        raise ValueError("empty dataset")
    smooth = LogisticObjective(features, labels)
    lam = 1.0 / smooth.sample_count
    meta = {"kind": "logistic", "d": smooth.dim, "n": smooth.sample_count}
    return CompositeProblem(smooth=smooth, nonsmooth=L1(lam), meta=meta)


# ---------------------------------------------------------------------------
# Serialization of generated quadratics
# ---------------------------------------------------------------------------


def save_quadratic(problem: CompositeProblem, path: str) -> None:
    """Dump a generated quadratic (diagonals, linear terms, header) for reproducibility."""
    smooth = problem.smooth
    if not isinstance(smooth, QuadraticObjective):
        raise ValueError("only quadratic problems are serializable")
    header = np.asarray(
        [
            float(problem.meta.get("seed", -1)),
            float(smooth.dim),
            float(smooth.sample_count),
            float(problem.meta.get("kappa", smooth.smoothness / smooth.strong_convexity)),
        ]
    )
    np.savez(path, header=header, diagonals=smooth.diagonals, linear=smooth.linear)


def load_quadratic(path: str) -> CompositeProblem:
    with np.load(path) as archive:
        header = archive["header"]
        smooth = QuadraticObjective(archive["diagonals"], archive["linear"])
    meta = {
        "kind": "quadratic",
        "seed": int(header[0]),
        "d": int(header[1]),
        "n": int(header[2]),
        "kappa": float(header[3]),
    }
    return CompositeProblem(smooth=smooth, nonsmooth=BallIndicator(1.0), meta=meta)

"""Experiment runner: seeded solver runs, step-size sweeps, reference caching.

Configuration is a flat ``key = value`` text file with dotted keys (see
README); command-line flags override file keys.  Each (strategy, option, seed)
combination produces one CSV of per-iteration records plus a summary row, and
optionally an SVG chart of the optimality gap against each cost axis.

Exit codes: 0 success, 2 configuration error, 3 diverged run / failed sweep,
4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _svg
from .estimator import (
    AdaptiveNested,
    AdaptiveUnbiased,
    ConditionParams,
    ConstantBatch,
    EtaSchedule,
    FullBatch,
    GeometricDelta,
    GeometricGrowth,
    PowerDelta,
    SamplingStrategy,
    VarianceEstimate,
    Variant,
    ZeroDelta,
)
from .metrics import InsufficientDataError, fit_linear_rate, fit_power_rate, write_csv
from .problems import (
    CompositeProblem,
    DatasetFormatError,
    LogisticObjective,
    QuadraticObjective,
    generate_quadratic,
    load_libsvm,
    make_logistic,
)
from .solver import (
    ConvexNesterov,
    DivergedError,
    FixedBeta,
    InvalidConfigError,
    SolverConfig,
    StrongConvexConstant,
    preset_config,
    run,
)

__all__ = [
    "ConfigError",
    "SweepFailedError",
    "ExperimentConfig",
    "ReferenceSolution",
    "parse_config_file",
    "build_experiment",
    "make_problem",
    "compute_reference",
    "run_experiment",
    "sweep_step_size",
    "main",
]

CACHE_ENV_VAR = "ADAPROX_CACHE_DIR"
STRATEGY_LABELS = ("deterministic", "stochastic", "geometric", "adaptive", "adaptive-biased")
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class SweepFailedError(RuntimeError):
    """Every run in a step-size sweep diverged."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "problem.kind",
    "problem.d",
    "problem.n",
    "problem.kappa",
    "problem.seed",
    "problem.path",
    "run.options",
    "run.strategies",
    "run.seeds",
    "run.max_iters",
    "run.grad_budget",
    "run.target_gap",
    "run.preset",
    "run.alpha",
    "run.beta",
    "run.timing",
    "strategy.batch",
    "strategy.b0",
    "strategy.growth",
    "strategy.eta",
    "strategy.eta_exponent",
    "strategy.iota0",
    "strategy.delta",
    "strategy.delta_exponent",
    "strategy.delta_scale",
    "strategy.delta_ratio",
    "strategy.variant",
    "strategy.sigma",
    "strategy.sigma_radius",
    "strategy.initial_size",
    "strategy.max_augmentations",
    "output.svg",
    "audit",
}


def parse_config_file(path: str) -> dict[str, str]:
    """Read flat ``key = value`` lines; ``#`` starts a comment, blanks ignored."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {line_number}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {line_number}: unknown key {key!r}")
        values[key] = value.strip()
    return values


@dataclass
class ExperimentConfig:
    problem: dict
    strategies: list[str]
    options: list[str]
    seeds: list[int]
    preset: Optional[str] = None
    alpha: Optional[float] = None
    beta: str = "auto"
    max_iters: int = 2000
    grad_budget: int = 100_000_000
    target_gap: Optional[float] = None
    strategy_params: dict = field(default_factory=dict)
    out_dir: Path = Path("runs")
    svg: bool = False
    audit: bool = False
    timing: bool = False
    cache_dir: Optional[Path] = None


def _cfg_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes", "on"):
        return True
    if text.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def build_experiment(values: dict[str, str], overrides: Optional[dict] = None) -> ExperimentConfig:
    """Assemble a typed experiment config from parsed keys plus CLI overrides."""
    overrides = overrides or {}
    try:
        kind = values.get("problem.kind")
        if kind not in ("quadratic", "logistic"):
            raise ConfigError(f"problem.kind must be quadratic or logistic, got {kind!r}")
        problem: dict = {"kind": kind}
        if kind == "quadratic":
            problem["d"] = int(values.get("problem.d", "10"))
            problem["n"] = int(values.get("problem.n", "10000"))
            problem["kappa"] = float(values.get("problem.kappa", "1000"))
            problem["seed"] = int(values.get("problem.seed", "0"))
        else:
            if "problem.path" not in values:
                raise ConfigError("logistic problems need problem.path")
            problem["path"] = values["problem.path"]

        strategies = [
            s.strip() for s in values.get("run.strategies", "deterministic").split(",") if s.strip()
        ]
        for label in strategies:
            if label not in STRATEGY_LABELS:
                raise ConfigError(f"unknown strategy {label!r}; expected one of {STRATEGY_LABELS}")
        options = [o.strip() for o in values.get("run.options", "I").split(",") if o.strip()]
        for option in options:
            if option not in ("I", "II"):
                raise ConfigError(f"options must be I or II, got {option!r}")
        seeds = [int(s) for s in values.get("run.seeds", "0").split(",") if s.strip()]
        if "seed" in overrides and overrides["seed"] is not None:
            seeds = [int(overrides["seed"])]
        if not seeds:
            raise ConfigError("run.seeds must be nonempty")

        strategy_params = {
            "batch": int(values.get("strategy.batch", "256")),
            "b0": int(values.get("strategy.b0", "32")),
            "growth": float(values.get("strategy.growth", "1.05")),
            "eta": float(values.get("strategy.eta", "0.1")),
            "eta_exponent": float(values.get("strategy.eta_exponent", "0")),
            "iota0": float(values.get("strategy.iota0", "0")),
            "delta": values.get("strategy.delta", "zero"),
            "delta_exponent": float(values.get("strategy.delta_exponent", "1.5")),
            "delta_scale": float(values.get("strategy.delta_scale", "1.0")),
            "delta_ratio": float(values.get("strategy.delta_ratio", "0.9")),
            "variant": values.get("strategy.variant", "expectation"),
            "sigma": values.get("strategy.sigma", "running"),
            "sigma_radius": float(values.get("strategy.sigma_radius", "3.0")),
            "initial_size": int(values.get("strategy.initial_size", "32")),
            "max_augmentations": int(values.get("strategy.max_augmentations", "5")),
        }
        if strategy_params["variant"] not in ("expectation", "finite-sum"):
            raise ConfigError("strategy.variant must be expectation or finite-sum")

        target = values.get("run.target_gap", "")
        out_dir = Path(overrides.get("out") or "runs")
        cache_override = os.environ.get(CACHE_ENV_VAR)
        config = ExperimentConfig(
            problem=problem,
            strategies=strategies,
            options=options,
            seeds=seeds,
            preset=values.get("run.preset") or None,
            alpha=float(values["run.alpha"]) if "run.alpha" in values else None,
            beta=values.get("run.beta", "auto"),
            max_iters=int(values.get("run.max_iters", "2000")),
            grad_budget=int(values.get("run.grad_budget", "100000000")),
            target_gap=float(target) if target else None,
            strategy_params=strategy_params,
            out_dir=out_dir,
            svg=_cfg_bool(values.get("output.svg", "false")),
            audit=bool(overrides.get("audit")) or _cfg_bool(values.get("audit", "false")),
            timing=_cfg_bool(values.get("run.timing", "false")),
            cache_dir=Path(cache_override) if cache_override else None,
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if config.preset is None and config.alpha is None:
        raise ConfigError("set run.preset or run.alpha")
    if config.preset is not None and config.alpha is not None:
        raise ConfigError("run.preset and run.alpha are mutually exclusive")
    return config


# ---------------------------------------------------------------------------
# Problem construction and reference caching
# ---------------------------------------------------------------------------


def make_problem(spec: dict) -> CompositeProblem:
    if spec["kind"] == "quadratic":
        return generate_quadratic(spec["d"], spec["n"], spec["kappa"], spec["seed"])
    features, labels, _, _ = load_libsvm(spec["path"])
    return make_logistic(features, labels)


def problem_fingerprint(problem: CompositeProblem) -> str:
    """Content hash of the defining data; keys the reference-solution cache."""
    digest = hashlib.sha256()
    smooth = problem.smooth
    if isinstance(smooth, QuadraticObjective):
        digest.update(b"quadratic")
        digest.update(smooth.diagonals.tobytes())
        digest.update(smooth.linear.tobytes())
    elif isinstance(smooth, LogisticObjective):
        digest.update(b"logistic")
        mat = smooth.features
        digest.update(np.asarray(mat.shape).tobytes())
        digest.update(mat.indptr.tobytes())
        digest.update(mat.indices.tobytes())
        digest.update(mat.data.tobytes())
        digest.update(smooth.labels.tobytes())
    else:
        digest.update(type(smooth).__name__.encode())
        digest.update(np.asarray([smooth.dim, smooth.sample_count]).tobytes())
        for probe in (np.zeros(smooth.dim), np.ones(smooth.dim)):
            digest.update(smooth.full_gradient(probe).tobytes())
    digest.update(repr(problem.nonsmooth).encode())
    return digest.hexdigest()[:16]


@dataclass
class ReferenceSolution:
    phi_star: float
    x_star: np.ndarray
    converged: bool
    iterations: int


def default_cache_dir() -> Path:
    override = os.environ.get(CACHE_ENV_VAR)
    return Path(override) if override else Path(".adaprox-cache")


def compute_reference(
    problem: CompositeProblem,
    cache_dir: Optional[Path] = None,
    tol: float = 1e-12,
    max_iters: int = 200_000,
) -> ReferenceSolution:
    """High-accuracy reference optimum, cached to disk by problem fingerprint.

    Runs the accelerated method with exact gradients (constant momentum when
    the problem is strongly convex) until the true reduced gradient norm drops
    below ``tol`` or the iteration cap is hit; the cap is recorded as a
    non-convergence warning rather than an error.
    """
    cache_dir = cache_dir or default_cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache_file = cache_dir / f"{problem_fingerprint(problem)}.json"
    if cache_file.exists():
        payload = json.loads(cache_file.read_text())
        return ReferenceSolution(
            phi_star=payload["phi_star"],
            x_star=np.asarray(payload["x_star"]),
            converged=payload["converged"],
            iterations=payload["iterations"],
        )

    smooth = problem.smooth
    alpha = 1.0 / smooth.smoothness
    if smooth.strong_convexity > 0:
        schedule = StrongConvexConstant(smooth.strong_convexity, alpha)
    else:
        schedule = ConvexNesterov()
    x = np.zeros(smooth.dim)
    y = x.copy()
    converged = False
    iterations = max_iters
    for k in range(max_iters):
        g = smooth.full_gradient(y)
        x_next = problem.nonsmooth.prox(alpha, y - alpha * g)
        r_norm = float(np.linalg.norm(y - x_next)) / alpha
        y = x_next + schedule.beta(k + 1) * (x_next - x)
        x = x_next
        if r_norm <= tol:
            converged = True
            iterations = k + 1
            break

    reference = ReferenceSolution(problem.phi(x), x, converged, iterations)
    cache_file.write_text(
        json.dumps(
            {
                "phi_star": reference.phi_star,
                "x_star": reference.x_star.tolist(),
                "converged": converged,
                "iterations": iterations,
            }
        )
    )
    return reference


# ---------------------------------------------------------------------------
# Strategy and solver assembly
# ---------------------------------------------------------------------------


def _condition_params(params: dict) -> ConditionParams:
    variant = Variant.EXPECTATION if params["variant"] == "expectation" else Variant.FINITE_SUM
    eta = EtaSchedule(params["eta"], params["eta_exponent"])
    kind = params["delta"]
    if kind == "zero":
        delta = ZeroDelta()
    elif kind == "power":
        delta = PowerDelta(params["delta_exponent"], params["delta_scale"])
    elif kind == "geometric":
        delta = GeometricDelta(params["delta_ratio"])
    else:
        raise ConfigError(f"strategy.delta must be zero, power, or geometric, got {kind!r}")
    return ConditionParams(variant, eta, params["iota0"], delta)


def _variance(params: dict, problem: CompositeProblem) -> VarianceEstimate:
    sigma = params["sigma"]
    if sigma == "running":
        return VarianceEstimate.running()
    if sigma == "bound":
        smooth = problem.smooth
        if not isinstance(smooth, QuadraticObjective):
            raise ConfigError("strategy.sigma = bound needs a generated quadratic problem")
        bound = smooth.deviation_bound(params["sigma_radius"])
        return VarianceEstimate.known(bound**2)
    try:
        return VarianceEstimate.known(float(sigma))
    except ValueError:
        raise ConfigError(f"strategy.sigma must be running, bound, or a number, got {sigma!r}")


def make_strategy(
    label: str, params: dict, seed: int, problem: CompositeProblem
) -> SamplingStrategy:
    if label == "deterministic":
        return FullBatch(rng_seed=seed)
    if label == "stochastic":
        return ConstantBatch(batch=params["batch"], rng_seed=seed)
    if label == "geometric":
        return GeometricGrowth(b0=params["b0"], growth=params["growth"], rng_seed=seed)
    cond = _condition_params(params)
    common = dict(
        cond=cond,
        variance=_variance(params, problem),
        rng_seed=seed,
        initial_size=params["initial_size"],
        max_augmentations=params["max_augmentations"],
    )
    if label == "adaptive":
        return AdaptiveUnbiased(**common)
    if label == "adaptive-biased":
        return AdaptiveNested(**common)
    raise ConfigError(f"unknown strategy {label!r}")


def _resolve_acceleration(config: ExperimentConfig, problem: CompositeProblem, alpha: float):
    smooth = problem.smooth
    beta = config.beta
    if beta == "auto":
        beta = "kappa" if smooth.strong_convexity > 0 else "nesterov"
    if beta == "nesterov":
        return ConvexNesterov()
    if beta == "strong":
        return StrongConvexConstant(smooth.strong_convexity, alpha)
    if beta == "kappa":
        if smooth.strong_convexity <= 0:
            raise ConfigError("run.beta = kappa needs a strongly convex problem")
        root = math.sqrt(smooth.smoothness / smooth.strong_convexity)
        return FixedBeta((root - 1.0) / (root + 1.0))
    try:
        return FixedBeta(float(beta))
    except ValueError:
        raise ConfigError(f"run.beta must be auto, nesterov, strong, kappa, or a number; got {beta!r}")


def _solver_pieces(config: ExperimentConfig, problem: CompositeProblem, option: str):
    """Resolve (alpha, acceleration, condition params) from a preset or explicit keys."""
    if config.preset is not None:
        smooth = problem.smooth
        sp = config.strategy_params
        preset = preset_config(
            config.preset,
            smooth.smoothness,
            smooth.strong_convexity,
            eta=sp["eta"],
            iota0=sp["iota0"],
            eta_hat=sp["eta"],
            delta_hat=sp["delta_scale"],
            delta=sp["delta_ratio"] if sp["delta"] == "geometric" else None,
        )
        if option != preset.option:
            raise ConfigError(
                f"preset {config.preset} is an Option {preset.option} regime; "
                f"drop option {option} from run.options"
            )
        return preset.alpha, preset.acceleration, preset.params
    alpha = config.alpha
    accel = _resolve_acceleration(config, problem, alpha) if option == "II" else None
    return alpha, accel, None


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

SUMMARY_HEADER = (
    "strategy,option,seed,alpha,status,iterations,final_phi,final_gap,"
    "prox_evals,grad_evals,rho_hat,p_hat"
)


@dataclass
class RunSummary:
    strategy: str
    option: str
    seed: int
    alpha: float
    status: str
    iterations: int
    final_phi: float
    final_gap: Optional[float]
    prox_evals: int
    grad_evals: int
    rho_hat: Optional[float]
    p_hat: Optional[float]

    def to_line(self) -> str:
        def opt(v):
            return "" if v is None else repr(float(v))

        return ",".join(
            [
                self.strategy,
                self.option,
                str(self.seed),
                repr(float(self.alpha)),
                self.status,
                str(self.iterations),
                repr(float(self.final_phi)),
                opt(self.final_gap),
                str(self.prox_evals),
                str(self.grad_evals),
                opt(self.rho_hat),
                opt(self.p_hat),
            ]
        )


def _fit_or_none(fit, records, window):
    try:
        value, _ = fit(records, window)
        return value
    except InsufficientDataError:
        return None


def run_experiment(config: ExperimentConfig) -> list[RunSummary]:
    """Run every (strategy, option, seed) combination and write CSVs plus a summary.

    A diverged run is recorded in the summary with its partial CSV kept; the
    caller decides the exit code.
    """
    problem = make_problem(config.problem)
    reference = compute_reference(problem, config.cache_dir)
    problem.reference_optimum = reference.phi_star

    config.out_dir.mkdir(parents=True, exist_ok=True)
    summaries: list[RunSummary] = []
    series: dict[str, list] = {}

    for option in config.options:
        alpha, acceleration, cond = _solver_pieces(config, problem, option)
        for label in config.strategies:
            for seed in config.seeds:
                strategy = make_strategy(label, config.strategy_params, seed, problem)
                solver_config = SolverConfig(
                    option=option,
                    alpha=alpha,
                    acceleration=acceleration,
                    max_iters=config.max_iters,
                    grad_budget=config.grad_budget,
                    eps_target=config.target_gap,
                    audit=config.audit,
                    condition_params=cond,
                    record_wall_time=config.timing,
                )
                stem = f"{label}_{option}_seed{seed}"
                try:
                    result = run(problem, strategy, solver_config)
                    status = result.status
                except DivergedError as exc:
                    result = exc.result
                    status = "diverged"
                write_csv(config.out_dir / f"{stem}.csv", result.records)
                if config.audit and result.audit_reports:
                    lines = [report.to_line() for report in result.audit_reports]
                    (config.out_dir / f"audit_{stem}.txt").write_text("\n".join(lines) + "\n")

                records = result.records
                window = (10, records[-1].k)
                summaries.append(
                    RunSummary(
                        strategy=label,
                        option=option,
                        seed=seed,
                        alpha=alpha,
                        status=status,
                        iterations=records[-1].k,
                        final_phi=records[-1].phi,
                        final_gap=records[-1].gap,
                        prox_evals=records[-1].prox_evals,
                        grad_evals=records[-1].grad_evals,
                        rho_hat=_fit_or_none(fit_linear_rate, records, window),
                        p_hat=_fit_or_none(fit_power_rate, records, window),
                    )
                )
                if config.svg and seed == config.seeds[0]:
                    series.setdefault(option, []).append((label, records))

    lines = [SUMMARY_HEADER] + [s.to_line() for s in summaries]
    (config.out_dir / "summary.csv").write_text("\n".join(lines) + "\n")

    if config.svg:
        for option, named_records in series.items():
            for axis, attr in (("prox", "prox_evals"), ("grad", "grad_evals")):
                chart_series = [
                    (
                        label,
                        [getattr(r, attr) for r in records if r.gap and r.gap > 0],
                        [r.gap for r in records if r.gap and r.gap > 0],
                    )
                    for label, records in named_records
                ]
                svg_text = _svg.line_chart(
                    chart_series,
                    xlabel=f"{axis} evaluations",
                    ylabel="optimality gap",
                    title=f"Option {option}: gap vs {axis} evaluations",
                )
                (config.out_dir / f"gap_vs_{axis}_{option}.svg").write_text(svg_text)
    return summaries


def sweep_step_size(config: ExperimentConfig, grid: Sequence[float]):
    """Run the configured single combination at each step size; pick the best.

    Selects the smallest final gap among non-diverged runs, breaking ties
    toward the larger step size.  Raises ``SweepFailedError`` if every run
    diverged.
    """
    if not grid:
        raise ConfigError("step-size grid must be nonempty")
    if len(config.strategies) != 1 or len(config.options) != 1 or len(config.seeds) != 1:
        raise ConfigError("sweeps need exactly one strategy, option, and seed")
    if config.preset is not None:
        raise ConfigError("sweeps vary run.alpha; drop run.preset")

    rows = []
    for alpha in grid:
        sub = replace(config, alpha=float(alpha), out_dir=config.out_dir / f"alpha_{alpha:g}")
        summary = run_experiment(sub)[0]
        rows.append(summary)
    survivors = [s for s in rows if s.status != "diverged" and s.final_gap is not None]
    if not survivors:
        raise SweepFailedError("all step sizes diverged")
    best = min(survivors, key=lambda s: (s.final_gap, -s.alpha))
    lines = [SUMMARY_HEADER] + [s.to_line() for s in rows]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    return best, rows


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaprox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the configured experiment")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--audit", action="store_true")

    sweep_p = sub.add_parser("sweep", help="step-size sweep over a comma-separated grid")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--grid", required=True)
    sweep_p.add_argument("--out", default=None)

    ref_p = sub.add_parser("reference", help="compute and cache the reference optimum")
    ref_p.add_argument("--config", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        values = parse_config_file(args.config)
        overrides = {
            "out": getattr(args, "out", None),
            "seed": getattr(args, "seed", None),
            "audit": getattr(args, "audit", False),
        }
        config = build_experiment(values, overrides)

        if args.command == "reference":
            problem = make_problem(config.problem)
            reference = compute_reference(problem, config.cache_dir)
            flag = "" if reference.converged else " (warning: iteration cap hit)"
            print(f"phi_star = {reference.phi_star!r} after {reference.iterations} iterations{flag}")
            return EXIT_OK

        if args.command == "sweep":
            grid = [float(v) for v in args.grid.split(",") if v.strip()]
            best, rows = sweep_step_size(config, grid)
            print(f"best alpha = {best.alpha:g} (final gap {best.final_gap!r})")
            for row in rows:
                print(f"  alpha={row.alpha:g} status={row.status} gap={row.final_gap!r}")
            return EXIT_OK

        summaries = run_experiment(config)
        print(SUMMARY_HEADER)
        for summary in summaries:
            print(summary.to_line())
        if any(s.status == "diverged" for s in summaries):
            return EXIT_DIVERGED
        return EXIT_OK
    except (ConfigError, InvalidConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SweepFailedError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DatasetFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:  # console-script shim
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

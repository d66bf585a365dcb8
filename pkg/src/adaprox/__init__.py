"""Proximal and accelerated proximal gradient methods with adaptive gradient estimation."""

from .estimator import (
    AdaptiveNested,
    AdaptiveUnbiased,
    ConditionParams,
    ConstantBatch,
    DeltaSchedule,
    EtaSchedule,
    FullBatch,
    GeometricDelta,
    GeometricGrowth,
    PowerDelta,
    SamplingStrategy,
    VarianceEstimate,
    Variant,
    ZeroDelta,
    estimate_gradient,
    finite_sum_sample_size,
    unbiased_sample_size,
    update_variance,
)
from .metrics import (
    EvalCounters,
    IterationRecord,
    fit_linear_rate,
    fit_power_rate,
    read_csv,
    reduced_gradient,
    true_reduced_gradient,
    write_csv,
)
from .problems import (
    BallIndicator,
    BoxIndicator,
    CompositeProblem,
    L1,
    LogisticObjective,
    NonsmoothTerm,
    QuadraticObjective,
    SmoothObjective,
    Zero,
    generate_quadratic,
    load_libsvm,
    load_quadratic,
    make_logistic,
    save_quadratic,
)
from .prox import ProxRequest, prox_ball, prox_box, prox_l1, prox_step
from .solver import (
    ConvexNesterov,
    DivergedError,
    FixedBeta,
    InvalidConfigError,
    PresetConfig,
    RunResult,
    SolverConfig,
    StepSchedule,
    StrongConvexConstant,
    preset_config,
    run,
)
from .verify import (
    audit_condition,
    check_prox_optimality,
    finite_difference_gradient,
    l1_prox_oracle,
    monte_carlo_condition,
)

__version__ = "0.1.0"

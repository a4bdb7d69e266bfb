"""Stochastic gradient methods with random multi-constraint projections."""

from .geometry import (
    Ball,
    ConstraintFamily,
    ConvexSet,
    Halfspace,
    contains,
    distance,
    gram_spectral_norm,
    project,
)
from .harness import (
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    parse_config,
    run_experiment,
    write_csv,
)
from .metrics import (
    MetricRecord,
    RateFit,
    ergodic_gap,
    estimate_eta,
    feasibility_error,
    fit_inverse_linearity,
    fit_loglog_slope,
    optimality_error,
    reference_projection,
    violation_fraction,
)
from .polyproj import (
    Polyhedron,
    QpNonconvergence,
    QpSolution,
    build_cutting_polyhedron,
    improvement_factor,
    project_activeset_oracle,
    project_hildreth,
)
from .problems import (
    Problem,
    SampleBatch,
    make_sphere_scenario,
    make_svm_scenario,
    make_two_sphere_scenario,
    reference_optimum,
    rng_stream,
    sample_batch,
    sample_indices,
)
from .solver import (
    AlgorithmKind,
    Constant,
    OffsetInverse,
    Polynomial,
    StepSchedule,
    StronglyConvex,
    TrialTrace,
    feasibility_update,
    optimality_update,
    run,
    step_size,
)

__version__ = "0.1.0"

"""Seeded Monte Carlo verification of SGD convergence guarantees.

The package runs plain stochastic gradient descent on strongly convex
families with certified constants, estimates the mean squared distance to
the optimum over replications, and checks it against the per-step envelope,
the constant-rate neighborhood bound, and decaying-rate convergence claims.
"""
from .analyzer import (
    BoundSequence,
    DnSeries,
    ProductDecay,
    Verdict,
    bound_sequence,
    check_convergence,
    check_descent_inequality,
    check_neighborhood,
    check_recurrence,
    estimate_dn,
    product_decay,
)
from .config import (
    ExperimentConfig,
    build_problem,
    build_schedule,
    load_config,
    parse_config,
    serialize_config,
)
from .engine import (
    SeededGenerator,
    Trajectory,
    derive_seed,
    run_replication,
    run_replications,
    step,
)
from .errors import (
    CertificationError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    SgdCheckError,
    UsageError,
)
from .objective import (
    AuditReport,
    FiniteSumLeastSquares,
    GradientCheckReport,
    HypothesisCertificate,
    ShiftedQuadratic,
    StochasticProblem,
    audit_certificate,
    check_gradients,
    sample_in_ball,
)
from .schedule import (
    ConstantSchedule,
    InverseTimeSchedule,
    ScheduleReport,
    SequenceSchedule,
    validate_schedule,
)

__all__ = [
    "AuditReport",
    "BoundSequence",
    "CertificationError",
    "ConfigurationError",
    "ConstantSchedule",
    "DivergenceError",
    "DnSeries",
    "DomainError",
    "ExperimentConfig",
    "FiniteSumLeastSquares",
    "GradientCheckReport",
    "HypothesisCertificate",
    "InverseTimeSchedule",
    "ProductDecay",
    "ScheduleReport",
    "SeededGenerator",
    "SequenceSchedule",
    "SgdCheckError",
    "ShiftedQuadratic",
    "StochasticProblem",
    "Trajectory",
    "UsageError",
    "Verdict",
    "audit_certificate",
    "bound_sequence",
    "build_problem",
    "build_schedule",
    "check_convergence",
    "check_descent_inequality",
    "check_gradients",
    "check_neighborhood",
    "check_recurrence",
    "derive_seed",
    "estimate_dn",
    "load_config",
    "parse_config",
    "product_decay",
    "run_replication",
    "run_replications",
    "sample_in_ball",
    "serialize_config",
    "step",
]

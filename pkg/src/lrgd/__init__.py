"""Low-rank gradient descent under a directional-derivative oracle."""
from .algorithms import (
    AlgoConfig,
    GradNorm,
    PLSuboptimality,
    ProjGradNorm,
    RunReport,
    RunTrace,
    SamplerSpec,
    SuboptimalityGap,
    adaptive_lrgd,
    check_approx_conditions,
    estimate_active_subspace,
    gd,
    is_satisfied,
    iterated_lrgd,
    lrgd,
    theoretical_budget,
)
from .errors import (
    ConstructionError,
    DegenerateSample,
    DivergenceError,
    DomainError,
    LRGDError,
    ObjectiveOverflow,
    OracleUnavailable,
    SpecError,
    StalledResidual,
)
from .functions import (
    CompositeSpec,
    combine,
    make_approx_low_rank,
    make_geometric_product,
    make_quadratic,
    make_ridge,
    parse_function_spec,
    random_ridge,
)
from .oracle import (
    CallLedger,
    CountedObjective,
    Objective,
    directional_derivative,
    eval_objective,
    fd_directional,
    full_gradient,
    ledger_snapshot,
)
from .rank import (
    ApproxRankCertificate,
    Ball,
    SampleList,
    check_local_bound,
    estimate_rank,
    hessian_estimate,
    local_hessian_subspace,
    verify_approx_rank,
)
from .subspace import (
    GradientMatrix,
    Subspace,
    orthonormalize,
    principal_angle_gap,
    project,
    smallest_singular,
    svd_left_basis,
)

__version__ = "0.1.0"

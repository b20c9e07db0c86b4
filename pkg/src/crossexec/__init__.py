"""Multi-asset optimal trade execution with cross-impact and resilience."""

from .errors import (
    ConfigurationError,
    CrossExecError,
    DegenerateInputError,
    IllConditionedImpactError,
    NoValidFError,
    NumericDomainError,
    PreconditionError,
    ShapeError,
    SingularDriverError,
    UnsupportedScopeError,
)
from .model import (
    CoefficientSet,
    FPath,
    LambdaPath,
    MarketSpec,
    choose_F,
    derive_coefficients,
    frame_from_matrix,
    gamma_power,
)
from .lindyn import (
    DeviationPath,
    ExecutionPlan,
    HiddenState,
    Resolvent,
    cost_quadratic_form,
    deviation_of_plan,
    fv_approximate,
    hidden_state,
    metric,
    pathwise_cost,
    pathwise_cost_asymmetric,
    phi,
    phi_bar,
    resolvent,
    risk_cost,
)
from .riccati import (
    FeedbackGain,
    RiccatiSolution,
    TargetSolution,
    ow_closed_form,
    solve_riccati,
    solve_riccati_hat,
    solve_targets,
    theta,
    theta_hat,
)
from .optimal import (
    OptimalSolution,
    crossing_zero_oracle,
    optimal_cost,
    optimal_state,
    optimal_strategy,
    solve_execution,
)
from .montecarlo import (
    FeedbackRule,
    MCEstimate,
    SimConfig,
    asymmetric_roundtrip,
    blowup_demo,
    mc_cost,
    path_increments,
    simulate_lambda,
)
from .checks import (
    AuditReport,
    CheckResult,
    ConleyResult,
    assumption_audit,
    conley,
    kappa_definiteness,
)

__version__ = "0.1.0"

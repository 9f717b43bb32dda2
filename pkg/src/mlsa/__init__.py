"""Multi-level stochastic approximation for roots of h(theta) = E[H(theta, U)]
when U is only samplable through biased discretizations U^n."""

from .engine import (
    FreezePolicy,
    SaConfig,
    SaRun,
    apply_freeze,
    run_coupled_sa,
    run_coupled_sa_batch,
    run_sa,
    run_sa_averaged,
    run_sa_batch,
)
from .errors import ConfigurationError, NumericalAbort
from .estimators import (
    EstimatorRun,
    LevelAllocation,
    RootProblem,
    beta_star,
    complexity_ml,
    complexity_ml_formula,
    complexity_sa,
    complexity_sr,
    ml_allocation,
    ml_estimator,
    ml_estimator_batch,
    sa_estimator,
    sa_estimator_batch,
    sa_rp_estimator,
    sa_rp_estimator_batch,
    scalar_clt_variance,
    sr_estimator,
    sr_estimator_batch,
    sr_rp_estimator,
    sr_rp_estimator_batch,
)
from .harness import ExperimentConfig, FrontierPoint, run_experiment
from .problems import (
    CallLevelProblem,
    QuantileProblem,
    bs_call,
    bs_call_inverse,
    bs_quantile,
    call_level_H,
    lognormal_pdf_at,
    normal_inv_cdf,
    problem_metadata,
    quantile_H,
)
from .rng import RngStream
from .sde import (
    CoupledTerminalSample,
    CoupledTerminalSampler,
    EulerTerminalSampler,
    GbmModel,
    coupled_terminal,
    euler_terminal,
    exact_terminal,
    strong_error_mse,
)
from .steps import StepSchedule, validate_hs2

__version__ = "0.1.0"

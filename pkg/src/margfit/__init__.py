"""margfit: marginal-survival-weighted relative-risk estimation.

Estimators for (possibly time-varying) relative-risk coefficients under
right censoring: classical partial likelihood, Kaplan-Meier-weighted, and
parametric-marginal-weighted score equations, with Andersen-Gill and robust
sandwich variances, an exact simulation engine with censoring calibration,
asymptotic relative-efficiency quadrature, and resampling distributions.
"""

from .dataset import SurvivalDataset, freireich, load_csv, risk_set_stats, save_csv
from .efficiency import (
    AREConfig,
    AREResult,
    a_function,
    are_table,
    censoring_fraction,
    relative_efficiency,
    sigma_integrals,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    FitError,
    MargfitError,
)
from .estimate import (
    Constant,
    FitResult,
    KaplanMeier,
    Parametric,
    WeightScheme,
    event_weights,
    iterative_marginal_fit,
    log_partial_likelihood,
    score_jacobian,
    solve_score,
    variance_andersen_gill,
    variance_sandwich,
    weighted_score,
)
from .marginal import (
    Empirical,
    Exponential,
    ExternalCurve,
    Lognormal,
    MarginalModel,
    PiecewiseExponential,
    StepSurvival,
    Weibull,
    fit_exponential,
    fit_piecewise_exponential,
    fit_weibull,
    kaplan_meier,
    load_external_curve,
    map_exponential,
    save_curve,
    survival_at,
)
from .resample import ResampleResult, bootstrap, random_weight_fit, resample_distribution
from .simulate import (
    Bernoulli,
    BetaFunction,
    ExponentialCensoring,
    GeneratorSpec,
    NoCensoring,
    SimStudyResult,
    StudyConfig,
    Uniform01,
    UniformCensoring,
    beta_star_oracle,
    beta_star_taylor,
    calibrate_censoring,
    draw_survival_time,
    expected_beta,
    expected_beta_family,
    generate_dataset,
    load_study_config,
    results_to_json,
    run_study,
    study_configs_from_dict,
    write_results_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "MargfitError",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "FitError",
    # dataset
    "SurvivalDataset",
    "load_csv",
    "save_csv",
    "risk_set_stats",
    "freireich",
    # marginal
    "StepSurvival",
    "Exponential",
    "Weibull",
    "PiecewiseExponential",
    "Lognormal",
    "Empirical",
    "ExternalCurve",
    "MarginalModel",
    "kaplan_meier",
    "fit_exponential",
    "fit_weibull",
    "fit_piecewise_exponential",
    "map_exponential",
    "survival_at",
    "load_external_curve",
    "save_curve",
    # estimate
    "Constant",
    "KaplanMeier",
    "Parametric",
    "WeightScheme",
    "FitResult",
    "event_weights",
    "weighted_score",
    "score_jacobian",
    "log_partial_likelihood",
    "solve_score",
    "variance_andersen_gill",
    "variance_sandwich",
    "iterative_marginal_fit",
    # simulate
    "BetaFunction",
    "Uniform01",
    "Bernoulli",
    "NoCensoring",
    "UniformCensoring",
    "ExponentialCensoring",
    "GeneratorSpec",
    "StudyConfig",
    "SimStudyResult",
    "draw_survival_time",
    "generate_dataset",
    "calibrate_censoring",
    "run_study",
    "expected_beta",
    "expected_beta_family",
    "beta_star_oracle",
    "beta_star_taylor",
    "load_study_config",
    "study_configs_from_dict",
    "results_to_json",
    "write_results_csv",
    # efficiency
    "AREConfig",
    "AREResult",
    "a_function",
    "sigma_integrals",
    "relative_efficiency",
    "censoring_fraction",
    "are_table",
    # resample
    "ResampleResult",
    "random_weight_fit",
    "resample_distribution",
    "bootstrap",
]

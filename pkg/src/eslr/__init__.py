"""Step-size adaptive evolution strategies and numerical verification of
their linear convergence and divergence rates."""

__version__ = "0.1.0"

from .core import (
    AlgorithmConfig,
    ConfigError,
    EsState,
    EvaluationError,
    RunTrace,
    default_config,
    expected_norm,
    gamma,
    gamma_csa0,
    gamma_csa1,
    gamma_xnes,
    log_gamma,
    log_gamma_csa0,
    log_gamma_csa1,
    log_gamma_xnes,
    rng_from_seed,
    run,
    sample_offspring,
    select,
    spawn_rngs,
    step,
    update_mean,
)
from .objectives import (
    Objective,
    compose_increasing,
    ellipsoid,
    half_norm,
    linear,
    make_objective,
    one_norm,
    perturbed_sphere,
    sphere,
)
from .chain import (
    DriftReport,
    chain_step,
    chain_update,
    drift_ratio,
    estimate_Rf,
    find_drift_alpha,
    gamma_star_logs,
    sample_log_gammas,
    simulate_chain,
)
from .rates import (
    RateEstimate,
    SlopeFit,
    batch_means_variance,
    estimate_rate,
    expected_log_progress,
    fit_slopes,
)
from .conditions import (
    ConditionReport,
    DivergenceCheck,
    csa1_statistic,
    evaluate_condition,
    order_stat_m2,
    sufficient_condition,
    verify_linear_divergence,
    xnes_statistic,
)

__all__ = [
    "AlgorithmConfig",
    "ConditionReport",
    "ConfigError",
    "DivergenceCheck",
    "DriftReport",
    "EsState",
    "EvaluationError",
    "Objective",
    "RateEstimate",
    "RunTrace",
    "SlopeFit",
    "batch_means_variance",
    "chain_step",
    "chain_update",
    "compose_increasing",
    "csa1_statistic",
    "default_config",
    "drift_ratio",
    "ellipsoid",
    "estimate_Rf",
    "estimate_rate",
    "evaluate_condition",
    "expected_log_progress",
    "expected_norm",
    "find_drift_alpha",
    "fit_slopes",
    "gamma",
    "gamma_csa0",
    "gamma_csa1",
    "gamma_star_logs",
    "gamma_xnes",
    "half_norm",
    "linear",
    "log_gamma",
    "log_gamma_csa0",
    "log_gamma_csa1",
    "log_gamma_xnes",
    "make_objective",
    "one_norm",
    "order_stat_m2",
    "perturbed_sphere",
    "rng_from_seed",
    "run",
    "sample_log_gammas",
    "sample_offspring",
    "select",
    "simulate_chain",
    "spawn_rngs",
    "sphere",
    "step",
    "sufficient_condition",
    "update_mean",
    "verify_linear_divergence",
    "xnes_statistic",
]

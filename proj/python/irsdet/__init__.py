"""Covariance-based activity detection for IRS-aided grant-free random access.

The heavy lifting lives in the compiled extension; this package re-exports it.
"""

from ._core import (  # noqa: F401
    CheckpointError,
    ConfigError,
    DataError,
    ModelContext,
    NumericalError,
    ScenarioConfig,
    Simulation,
    cd_solve,
    covariance_column,
    equal_error_rate,
    gate_forward_file,
    gradient,
    kl_loss,
    mean_column,
    nll,
    noise_normalized,
    pgd_solve,
    pm_pf,
    preprocess,
    run_monte_carlo,
    select_expert,
    unfolded_forward_file,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "ModelContext",
    "NumericalError",
    "ScenarioConfig",
    "Simulation",
    "cd_solve",
    "covariance_column",
    "equal_error_rate",
    "gate_forward_file",
    "gradient",
    "kl_loss",
    "mean_column",
    "nll",
    "noise_normalized",
    "pgd_solve",
    "pm_pf",
    "preprocess",
    "run_monte_carlo",
    "select_expert",
    "unfolded_forward_file",
]

__version__ = "0.1.0"

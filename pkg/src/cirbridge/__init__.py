"""Nonnegative mean-field CIR bridge toolkit.

Closed-form moments, well-posedness and Feller diagnostics, exact
nonnegativity-preserving Monte Carlo, day-count normalization, and two-step
least-squares calibration, with a batch CLI (`cirbridge`).
"""

from .calibrate import (
    CalibrationResult,
    FitConfig,
    fit_mean,
    fit_model,
    fit_std,
    normalized_rmse,
)
from .data import (
    DaySeries,
    NormalizedDay,
    NormalizedEnsemble,
    empirical_curves,
    ensemble_to_day_files,
    load_day_counts,
    normalize_days,
    write_curves_csv,
)
from .model import (
    BridgeModel,
    FellerProfile,
    WellPosednessReport,
    check_well_posedness,
    classify_feller,
    default_diagnostic_grid,
    feller_index,
    sigma_at,
)
from .moments import (
    MomentCurves,
    closed_moment_curves,
    mean_closed,
    mean_integral,
    mean_peak,
    solve_mean_ode,
    solve_moment_odes,
    variance_closed,
)
from .simulate import (
    LogPdfTable,
    PathEnsemble,
    SimConfig,
    cir_transition_sample,
    cir_transition_sample_many,
    empirical_moments,
    estimate_log_pdf,
    load_ensemble_bin,
    save_ensemble_bin,
    save_ensemble_csv,
    simulate_ensemble,
    simulate_superposition,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeModel",
    "CalibrationResult",
    "DaySeries",
    "FellerProfile",
    "FitConfig",
    "LogPdfTable",
    "MomentCurves",
    "NormalizedDay",
    "NormalizedEnsemble",
    "PathEnsemble",
    "SimConfig",
    "WellPosednessReport",
    "check_well_posedness",
    "cir_transition_sample",
    "cir_transition_sample_many",
    "classify_feller",
    "closed_moment_curves",
    "default_diagnostic_grid",
    "empirical_curves",
    "empirical_moments",
    "ensemble_to_day_files",
    "estimate_log_pdf",
    "feller_index",
    "fit_mean",
    "fit_model",
    "fit_std",
    "load_day_counts",
    "load_ensemble_bin",
    "mean_closed",
    "mean_integral",
    "mean_peak",
    "normalize_days",
    "normalized_rmse",
    "save_ensemble_bin",
    "save_ensemble_csv",
    "sigma_at",
    "simulate_ensemble",
    "simulate_superposition",
    "solve_mean_ode",
    "solve_moment_odes",
    "variance_closed",
    "write_curves_csv",
    "__version__",
]

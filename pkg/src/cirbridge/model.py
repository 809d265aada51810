"""Parametric bridge model, well-posedness check, and Feller diagnostics.

The model is the five-parameter family
    dX = (a - r*X/(1-t)) dt + sigma(t) * sqrt(r/(1-t)^alpha) * sqrt(X) dB,
    sigma(t)^2 = mu^2 + omega * mean(t),
pinned to 0 at both ends of the unit interval.  A unique strong pinned
solution exists when alpha < min(2, 1+r) and sigma^2 stays positive along the
mean curve; check_well_posedness reports both conditions.

The Feller index compares noise against the source at each instant,
    F_t = sigma(t)^2 * r / (2*a*(1-t)^alpha) - 1,
reducing to the classical square-root-diffusion criterion 2a >= sigma^2 at
r = 1, alpha = 0.  F_t < 0 on an interval means the zero boundary is
unattainable there (low-volatility regime); F_t >= 0 everywhere means the
process keeps touching zero and the paths are intermittent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError

if TYPE_CHECKING:  # pragma: no cover
    from .moments import MomentCurves

__all__ = [
    "BridgeModel",
    "WellPosednessReport",
    "FellerProfile",
    "sigma_at",
    "check_well_posedness",
    "feller_index",
    "classify_feller",
    "default_diagnostic_grid",
]

# Default diagnostic grid: dense in (0,1) but clear of both open endpoints.
_GRID_N = 1000
_GRID_MARGIN = 1e-4


@dataclass(frozen=True)
class BridgeModel:
    """Five scalars plus horizon, in normalized (unit total) units.

    a: source rate, >= 0.  r: reversion strength, > 0.  mu: volatility
    floor, > 0.  omega: mean-field volatility slope, any sign.  alpha:
    diffusion singularity exponent.  horizon: terminal time, > 0 (all
    published fits use 1; other horizons just rescale the clock).
    """

    a: float
    r: float
    mu: float
    omega: float
    alpha: float
    horizon: float = 1.0

    def __post_init__(self):
        if self.a < 0.0:
            raise ValueError(f"source rate a must be >= 0, got {self.a}")
        if self.r <= 0.0:
            raise ValueError(f"reversion r must be > 0, got {self.r}")
        if self.mu <= 0.0:
            raise ValueError(f"volatility floor mu must be > 0, got {self.mu}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")

    def scale_sigma(self, factor: float) -> "BridgeModel":
        """Model with the volatility function scaled by `factor`
        (mu -> factor*mu, omega -> factor^2*omega)."""
        if factor <= 0.0:
            raise ValueError("sigma scale factor must be positive")
        return replace(self, mu=factor * self.mu, omega=factor * factor * self.omega)

    @property
    def alpha_bound(self) -> float:
        return min(2.0, 1.0 + self.r)


@dataclass(frozen=True)
class WellPosednessReport:
    """Outcome of the sufficient condition for a unique pinned solution."""

    alpha_bound: float
    alpha_ok: bool
    sigma_positive: bool
    sigma_margin: float
    overall: bool


@dataclass(frozen=True)
class FellerProfile:
    """Feller index sampled on a grid, with the <0 sub-ranges singled out."""

    grid: np.ndarray
    values: np.ndarray
    violated_everywhere: bool
    satisfied_intervals: list[tuple[float, float]]


def default_diagnostic_grid(model: BridgeModel | None = None, n: int = _GRID_N) -> np.ndarray:
    horizon = model.horizon if model is not None else 1.0
    return horizon * np.linspace(_GRID_MARGIN, 1.0 - _GRID_MARGIN, n)


def _default_mean_curve(model: BridgeModel) -> "MomentCurves":
    from .moments import closed_moment_curves

    return closed_moment_curves(model, default_diagnostic_grid(model), with_std=False)


def sigma_at(t: float, model: BridgeModel, mean_value: float) -> float:
    """Volatility sqrt(mu^2 + omega*mean_value); the time argument is kept
    for signature symmetry with the other pointwise diagnostics."""
    s2 = model.mu * model.mu + model.omega * mean_value
    if s2 <= 0.0:
        raise DomainError(
            f"volatility undefined: mu^2 + omega*mean = {s2:.6g} <= 0 "
            f"(mu={model.mu}, omega={model.omega}, mean={mean_value})"
        )
    return math.sqrt(s2)


def check_well_posedness(
    model: BridgeModel, mean_curve: "MomentCurves | None" = None
) -> WellPosednessReport:
    """Evaluate the sufficient condition alpha < min(2, 1+r) together with
    positivity of sigma^2 along the mean curve.

    mean_curve defaults to the closed-form mean on the 1000-point diagnostic
    grid; pass a denser curve for unusually peaked models.
    """
    if mean_curve is None:
        mean_curve = _default_mean_curve(model)
    alpha_ok = model.alpha < model.alpha_bound
    s2 = model.mu * model.mu + model.omega * mean_curve.mean
    sigma_margin = float(np.min(s2))
    sigma_positive = sigma_margin > 0.0
    return WellPosednessReport(
        alpha_bound=model.alpha_bound,
        alpha_ok=alpha_ok,
        sigma_positive=sigma_positive,
        sigma_margin=sigma_margin,
        overall=alpha_ok and sigma_positive,
    )


def feller_index(t: float, model: BridgeModel, mean_value: float) -> float:
    """sigma^2(t) * r / (2a * (1-t)^alpha) - 1 at one instant."""
    if model.a <= 0.0:
        raise DomainError("Feller index requires a > 0")
    s = t / model.horizon
    if not 0.0 <= s < 1.0:
        raise DomainError(f"time {t} outside [0, horizon)")
    sigma = sigma_at(t, model, mean_value)
    w_pow = math.exp(model.alpha * math.log1p(-s)) if s > 0.0 else 1.0
    return sigma * sigma * model.r / (2.0 * model.a * w_pow) - 1.0


def classify_feller(
    model: BridgeModel, mean_curve: "MomentCurves | None" = None
) -> FellerProfile:
    """Feller index along a mean curve, plus the maximal sub-ranges where the
    condition holds (index < 0)."""
    if mean_curve is None:
        mean_curve = _default_mean_curve(model)
    grid = mean_curve.grid
    s = grid / model.horizon
    if s[0] <= 0.0 or s[-1] >= 1.0:
        raise DomainError("Feller classification grid must lie strictly inside (0, 1)")
    if model.a <= 0.0:
        raise DomainError("Feller index requires a > 0")
    s2 = model.mu * model.mu + model.omega * mean_curve.mean
    if np.min(s2) <= 0.0:
        raise DomainError("volatility undefined somewhere on the grid")
    values = s2 * model.r / (2.0 * model.a * np.exp(model.alpha * np.log1p(-s))) - 1.0

    satisfied = values < 0.0
    intervals: list[tuple[float, float]] = []
    start = None
    for i, flag in enumerate(satisfied):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            intervals.append((float(grid[start]), float(grid[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(grid[start]), float(grid[-1])))

    return FellerProfile(
        grid=grid,
        values=values,
        violated_everywhere=not intervals,
        satisfied_intervals=intervals,
    )

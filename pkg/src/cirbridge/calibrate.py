"""Two-step least-squares calibration and the normalized RMSE metric.

Step 1 fits (a, r) to the empirical mean.  The objective is linear in a, so
for each candidate r on a scan grid the optimal source rate has the closed
form a*(r) = sum(m*g)/sum(g^2) with g the unit-source mean shape; the best
candidate is then polished by a bounded one-dimensional search over r with a
profiled out.  Profiling keeps the fit exactly scale-equivariant: scaling the
data scales the whole profile objective, which moves no iterate.

Step 2 fits (mu, omega, alpha) to the empirical std by multi-start
Nelder-Mead with additive quadratic penalties enforcing mu > 0,
alpha < min(2, 1+r) - 1e-6 and positivity of sigma^2 along the mean curve
(checked at the analytic mean peak, where omega < 0 bites hardest).  The
unfrozen fit warm-starts from the omega = 0 solution, so allowing the
mean-field slope can never end up with a worse objective than pinning it.

RMSEs are reported divided by the integrated theoretical mean a/(2(1+r)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import (
    DegenerateFitError,
    FitError,
    GridMismatchError,
    NoFeasibleStartError,
)
from .model import BridgeModel, FellerProfile, WellPosednessReport, check_well_posedness, classify_feller
from .moments import (
    MomentCurves,
    _mean_shape,
    closed_moment_curves,
    mean_closed,
    mean_integral,
    mean_peak,
    variance_closed,
)

__all__ = [
    "FitConfig",
    "CalibrationResult",
    "fit_mean",
    "fit_std",
    "fit_model",
    "normalized_rmse",
]

_ALPHA_MARGIN = 1e-6
_OMEGA_SCALE = 100.0  # Nelder-Mead works on omega/_OMEGA_SCALE


@dataclass(frozen=True)
class FitConfig:
    r_search: tuple[float, float, int] = (0.05, 5.0, 200)
    simplex_tolerance: float = 1e-8
    restarts: int = 8
    constraint_penalty: float = 1e6
    freeze_omega_zero: bool = False
    freeze_alpha_one: bool = False
    restart_seed: int = 0

    def __post_init__(self):
        lo, hi, n = self.r_search
        if not (0.0 < lo < hi):
            raise ValueError("r_search bounds must satisfy 0 < lower < upper")
        if n < 10:
            raise ValueError("r_search grid size must be >= 10")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class CalibrationResult:
    model: BridgeModel
    rmse_mean_normalized: float
    rmse_std_normalized: float
    assumption: WellPosednessReport
    feller: FellerProfile

    def to_json_dict(self) -> dict:
        return {
            "a": self.model.a,
            "r": self.model.r,
            "mu": self.model.mu,
            "omega": self.model.omega,
            "alpha": self.model.alpha,
            "rmse_ave": self.rmse_mean_normalized,
            "rmse_std": self.rmse_std_normalized,
            "assumption_ok": self.assumption.overall,
            "feller_violated_everywhere": self.feller.violated_everywhere,
        }


def fit_mean(curves: MomentCurves, config: FitConfig | None = None) -> tuple[float, float]:
    """Least-squares (a, r) against the empirical mean curve."""
    if config is None:
        config = FitConfig()
    grid = np.asarray(curves.grid, dtype=np.float64)
    m_raw = np.asarray(curves.mean, dtype=np.float64)
    if grid.size < 10:
        raise FitError(f"need >= 10 occupied bins with mean values, got {grid.size}")
    # normalize the data scale out of the search: the optimizer then sees
    # (up to ulps) the same problem for c*m as for m, which keeps the fit
    # scale-equivariant far beyond the 1e-8 contract
    scale = float(np.max(m_raw))
    if scale <= 0.0:
        raise DegenerateFitError("mean curve is identically zero")
    m_hat = m_raw / scale

    def a_star(r: float) -> float:
        g = _mean_shape(grid, r)
        gg = float(g @ g)
        if gg <= 0.0:
            return -1.0
        return float(m_hat @ g) / gg

    def profile_objective(r: float) -> float:
        g = _mean_shape(grid, r)
        gg = float(g @ g)
        if gg <= 0.0:
            return math.inf
        s = float(m_hat @ g)
        if s <= 0.0:
            return math.inf
        return float(m_hat @ m_hat) - s * s / gg

    lo, hi, n = config.r_search
    rs = np.linspace(lo, hi, n)
    objs = np.array([profile_objective(r) for r in rs])
    if not np.any(np.isfinite(objs)):
        raise DegenerateFitError(
            "no reversion candidate gives a positive source rate (empty or "
            "all-zero mean curve?)"
        )
    best = int(np.argmin(objs))
    b_lo = rs[max(best - 1, 0)]
    b_hi = rs[min(best + 1, n - 1)]
    res = minimize_scalar(
        profile_objective, bounds=(b_lo, b_hi), method="bounded",
        options={"xatol": 1e-10},
    )
    r_hat = float(res.x) if math.isfinite(res.fun) and res.fun <= objs[best] else float(rs[best])
    a_hat = a_star(r_hat)
    if a_hat <= 0.0:
        r_hat = float(rs[best])
        a_hat = a_star(r_hat)
    if a_hat <= 0.0:
        raise DegenerateFitError("fitted source rate is nonpositive")
    return a_hat * scale, r_hat


def _std_objective_factory(grid, s_hat, a, r, penalty):
    alpha_max = min(2.0, 1.0 + r) - _ALPHA_MARGIN
    _, u_max = mean_peak(BridgeModel(a=a, r=r, mu=1.0, omega=0.0, alpha=0.5))
    base = float(s_hat @ s_hat)

    def objective(params) -> float:
        mu, omega, alpha = params
        pen = 0.0
        if alpha > alpha_max:
            pen += penalty * (alpha - alpha_max) ** 2
        if mu <= 0.0:
            return base + pen + penalty * (1.0 + mu * mu)
        sig_min = mu * mu + min(0.0, omega) * u_max
        if sig_min <= 0.0:
            return base + pen + penalty * (1.0 + sig_min * sig_min)
        model = BridgeModel(a=a, r=r, mu=mu, omega=omega, alpha=alpha)
        v = variance_closed(grid, model)
        resid = s_hat - np.sqrt(v)
        return float(resid @ resid) + pen

    return objective, alpha_max, u_max


def _run_simplex(objective, start, free_mask, tol):
    """Nelder-Mead over the free coordinates, twice (restart tightens it)."""
    start = np.asarray(start, dtype=np.float64)
    scale = np.array([1.0, _OMEGA_SCALE, 1.0])
    free = np.nonzero(free_mask)[0]

    def reduced(x):
        p = start.copy()
        p[free] = x * scale[free]
        return objective(p)

    x0 = start[free] / scale[free]
    for _ in range(2):
        res = minimize(
            reduced, x0, method="Nelder-Mead",
            options={"xatol": tol, "fatol": tol, "maxiter": 4000, "maxfev": 6000},
        )
        x0 = res.x
    out = start.copy()
    out[free] = res.x * scale[free]
    return out, float(res.fun)


def fit_std(
    curves: MomentCurves, a: float, r: float, config: FitConfig | None = None
) -> tuple[float, float, float]:
    """Least-squares (mu, omega, alpha) against the empirical std curve,
    with (a, r) held fixed from the mean fit."""
    if config is None:
        config = FitConfig()
    if curves.std is None:
        raise FitError("curves carry no std values")
    grid = np.asarray(curves.grid, dtype=np.float64)
    s_hat = np.asarray(curves.std, dtype=np.float64)

    objective, alpha_max, u_max = _std_objective_factory(
        grid, s_hat, a, r, config.constraint_penalty
    )

    # scale guess: the objective is proportional to mu^2 at omega = 0
    ref = BridgeModel(a=a, r=r, mu=1.0, omega=0.0, alpha=min(0.5, alpha_max - 0.05))
    v_ref = float(np.max(variance_closed(grid, ref)))
    peak = float(np.max(s_hat)) if s_hat.size else 0.0
    mu_scale = peak / math.sqrt(v_ref) if v_ref > 0.0 and peak > 0.0 else 1.0
    mu_scale = min(max(mu_scale, 1e-3), 1e3)

    if config.freeze_omega_zero:
        free_mask = np.array([True, False, not config.freeze_alpha_one])
    else:
        free_mask = np.array([True, True, True])

    starts: list[np.ndarray] = []
    if not config.freeze_omega_zero:
        frozen = replace(config, freeze_omega_zero=True)
        mu_f, _, alpha_f = fit_std(curves, a, r, frozen)
        starts.append(np.array([mu_f, 0.0, alpha_f]))
    for alpha0 in (0.5, 1.0, 0.0):
        starts.append(
            np.array([mu_scale, 0.0, min(alpha0, alpha_max - 0.05)])
        )
    rng = np.random.default_rng(config.restart_seed)
    for _ in range(config.restarts):
        mu0 = mu_scale * math.exp(rng.normal(0.0, 0.5))
        alpha0 = rng.uniform(-0.75, alpha_max - 0.05)
        eta = rng.uniform(-0.9, 0.5)
        omega0 = 0.0 if config.freeze_omega_zero else eta * mu0 * mu0 / u_max
        starts.append(np.array([mu0, omega0, alpha0]))
    if config.freeze_alpha_one:
        for s in starts:
            s[2] = 1.0
        if alpha_max <= 1.0:
            raise NoFeasibleStartError(
                f"alpha pinned at 1 but the admissible bound is {alpha_max:.4g}"
            )

    feasible = [
        s for s in starts
        if s[0] > 0.0 and s[2] <= alpha_max and s[0] ** 2 + min(0.0, s[1]) * u_max > 0.0
    ]
    if not feasible:
        raise NoFeasibleStartError("every restart violates the constraints")

    results = []
    for s in feasible:
        p, f = _run_simplex(objective, s, free_mask, config.simplex_tolerance)
        results.append((f, tuple(p)))
    results.sort(key=lambda t: (t[0], t[1]))
    best = np.array(results[0][1])

    mu, omega, alpha = float(best[0]), float(best[1]), float(best[2])
    if not (mu > 0.0 and alpha <= alpha_max and mu * mu + min(0.0, omega) * u_max > 0.0):
        raise FitError(
            f"optimizer returned an infeasible point mu={mu}, omega={omega}, "
            f"alpha={alpha}"
        )
    return mu, omega, alpha


def normalized_rmse(
    theoretical: MomentCurves, empirical: MomentCurves, model: BridgeModel
) -> tuple[float, float]:
    """RMSE of mean and std discrepancies over shared bins, each divided by
    the integrated theoretical mean a/(2(1+r))."""
    if theoretical.grid.shape != empirical.grid.shape or not np.allclose(
        theoretical.grid, empirical.grid, rtol=0.0, atol=1e-9
    ):
        raise GridMismatchError("curves do not share the same occupied bins")
    norm = mean_integral(model)
    rmse_mean = float(np.sqrt(np.mean((theoretical.mean - empirical.mean) ** 2))) / norm
    if theoretical.std is None or empirical.std is None:
        raise ValueError("both curves need std values for the std RMSE")
    rmse_std = float(np.sqrt(np.mean((theoretical.std - empirical.std) ** 2))) / norm
    return rmse_mean, rmse_std


def fit_model(curves: MomentCurves, config: FitConfig | None = None) -> CalibrationResult:
    """Two-step calibration pipeline on one empirical curve set."""
    if config is None:
        config = FitConfig()
    a, r = fit_mean(curves, config)
    mu, omega, alpha = fit_std(curves, a, r, config)
    model = BridgeModel(a=a, r=r, mu=mu, omega=omega, alpha=alpha)
    theoretical = closed_moment_curves(model, curves.grid)
    rmse_mean, rmse_std = normalized_rmse(theoretical, curves, model)
    return CalibrationResult(
        model=model,
        rmse_mean_normalized=rmse_mean,
        rmse_std_normalized=rmse_std,
        assumption=check_well_posedness(model),
        feller=classify_feller(model),
    )

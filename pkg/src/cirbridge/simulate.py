"""Nonnegativity-preserving Monte Carlo simulation of the bridge.

The primary scheme freezes the coefficients on each step [t_k, t_{k+1}) and
samples the resulting square-root-diffusion transition exactly through its
noncentral chi-square representation (Poisson-mixed gamma), so every value is
nonnegative by construction and the only discretization error is the
coefficient freezing.  A truncated Euler scheme is retained purely as a
cross-check.  The terminal point is pinned to 0 by fiat, matching the proved
limit; the final step is therefore never sampled.
"""

from __future__ import annotations

import io
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError
from .model import BridgeModel, check_well_posedness
from .moments import MomentCurves, mean_closed

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "LogPdfTable",
    "cir_transition_sample",
    "cir_transition_sample_many",
    "simulate_ensemble",
    "simulate_superposition",
    "empirical_moments",
    "estimate_log_pdf",
    "save_ensemble_csv",
    "save_ensemble_bin",
    "load_ensemble_bin",
]

SCHEMES = ("frozen-exact", "truncated-euler")

_BIN_MAGIC = b"CIRBENS1"


@dataclass(frozen=True)
class SimConfig:
    """Simulation protocol: uniform steps on [0, horizon], recorded every
    record_stride-th grid point (which must divide n_steps)."""

    n_steps: int = 5000
    n_paths: int = 100_000
    master_seed: int = 0
    scheme: str = "frozen-exact"
    record_stride: int = 50

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.record_stride < 1 or self.n_steps % self.record_stride != 0:
            raise ValueError("record_stride must be >= 1 and divide n_steps")

    @property
    def n_recorded(self) -> int:
        return self.n_steps // self.record_stride + 1


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated paths on the recorded grid; pinned to 0 at both ends."""

    grid: np.ndarray
    paths: np.ndarray
    model: BridgeModel
    config: SimConfig

    def __post_init__(self):
        if self.paths.ndim != 2 or self.paths.shape[1] != self.grid.size:
            raise ValueError("paths must be (n_paths, len(grid))")
        if not np.all(np.isfinite(self.paths)):
            raise ValueError("ensemble contains non-finite values")
        if np.any(self.paths < 0.0):
            raise ValueError("ensemble contains negative values")
        if np.any(self.paths[:, 0] != 0.0) or np.any(self.paths[:, -1] != 0.0):
            raise ValueError("paths must be pinned to 0 at both ends")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]


@dataclass(frozen=True)
class LogPdfTable:
    """Natural-log histogram densities on shared edges; empty bins are NaN
    (absent), never -inf."""

    times: np.ndarray
    bin_edges: np.ndarray
    log_density: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return ~np.isnan(self.log_density)


# ---------------------------------------------------------------------------
# Frozen-coefficient transition parameters.
#
# Over one step the dynamics are dX = (a_eff - b_eff X) dt + v_eff sqrt(X) dB,
# whose transition is c * noncentral-chi-square(nu, lam) with
#   c = v_eff^2 (1 - e^(-b_eff dt)) / (4 b_eff),
#   nu = 4 a_eff / v_eff^2,
#   lam = x e^(-b_eff dt) / c.
# The kernels consume (lam_half_factor, two_c, nu_half) per step.
# ---------------------------------------------------------------------------


def _transition_constants(a_eff, b_eff, v_eff, dt):
    e = np.exp(-b_eff * dt)
    one_minus_e = -np.expm1(-b_eff * dt)
    v2 = v_eff * v_eff
    c = v2 * one_minus_e / (4.0 * b_eff)
    return e / (2.0 * c), 2.0 * c, 2.0 * a_eff / v2


def _step_constants(model: BridgeModel, n_steps: int, a_eff: float):
    """Per-step frozen coefficients on the uniform grid, left endpoints."""
    dt = model.horizon / n_steps
    t = model.horizon * np.arange(n_steps - 1, dtype=np.float64) / n_steps
    s = t / model.horizon
    mean = mean_closed(t, model)
    sig2 = model.mu * model.mu + model.omega * mean
    if np.min(sig2) <= 0.0:
        k = int(np.argmin(sig2))
        raise DomainError(
            f"volatility undefined at t={t[k]:.6g}: mu^2 + omega*mean = {sig2[k]:.6g}"
        )
    w = 1.0 - s
    b = model.r / w
    v2 = sig2 * model.r * np.exp(-model.alpha * np.log(w))
    lam_half_factor, two_c, nu_half = _transition_constants(a_eff, b, np.sqrt(v2), dt)
    return {
        "dt": dt,
        "lam_half_factor": np.ascontiguousarray(lam_half_factor),
        "two_c": np.ascontiguousarray(two_c),
        "nu_half": np.ascontiguousarray(nu_half),
        "a_dt": np.ascontiguousarray(np.full(n_steps - 1, a_eff * dt)),
        "b_dt": np.ascontiguousarray(b * dt),
        "dif": np.ascontiguousarray(np.sqrt(v2 * dt)),
    }


def _recorded_grid(model: BridgeModel, config: SimConfig) -> np.ndarray:
    idx = np.arange(config.n_recorded) * config.record_stride
    return model.horizon * idx / config.n_steps


def _run(model, config, a_eff, process, out, threads):
    consts = _step_constants(model, config.n_steps, a_eff)
    kernel = _backend.active()
    if config.scheme == "frozen-exact":
        kernel.run_frozen(
            consts["lam_half_factor"], consts["two_c"], consts["nu_half"],
            config.master_seed, process, config.n_steps, config.record_stride,
            out, threads,
        )
    else:
        kernel.run_euler(
            consts["a_dt"], consts["b_dt"], consts["dif"],
            config.master_seed, process, config.n_steps, config.record_stride,
            out, threads,
        )


def _warn_if_ill_posed(model: BridgeModel):
    report = check_well_posedness(model)
    if not report.overall:
        warnings.warn(
            "model violates the well-posedness condition "
            f"(alpha bound {report.alpha_bound:.4g}, sigma margin "
            f"{report.sigma_margin:.4g}); simulating anyway",
            RuntimeWarning,
            stacklevel=3,
        )


def simulate_ensemble(
    model: BridgeModel, config: SimConfig, threads: int | None = None
) -> PathEnsemble:
    """Simulate config.n_paths independent paths of the bridge.

    Ill-posed models (blow-up studies) are simulated with a warning.  Output
    is bit-reproducible for fixed (model, config) regardless of thread count.
    """
    _warn_if_ill_posed(model)
    if threads is None:
        threads = _backend.default_threads()
    out = np.empty((config.n_paths, config.n_recorded), dtype=np.float64)
    _run(model, config, model.a, 0, out, threads)
    return PathEnsemble(
        grid=_recorded_grid(model, config), paths=out, model=model, config=config
    )


def simulate_superposition(
    model: BridgeModel,
    n: int,
    source_weights=None,
    config: SimConfig | None = None,
    threads: int | None = None,
) -> PathEnsemble:
    """Path-wise sum of n independent sub-bridges whose source rates split
    model.a by source_weights (uniform by default); every sub-bridge keeps
    the full model's mean curve in its coefficients.

    With n = 1 the output is bit-identical to simulate_ensemble.
    """
    if config is None:
        config = SimConfig()
    if n < 1:
        raise ValueError("n must be >= 1")
    if source_weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(source_weights, dtype=np.float64)
        if weights.shape != (n,):
            raise ValueError(f"need exactly {n} weights")
        if np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    _warn_if_ill_posed(model)
    if threads is None:
        threads = _backend.default_threads()

    total = np.zeros((config.n_paths, config.n_recorded), dtype=np.float64)
    buf = np.empty_like(total)
    for i, w in enumerate(weights):
        _run(model, config, float(w) * model.a, i, buf, threads)
        total += buf
    return PathEnsemble(
        grid=_recorded_grid(model, config), paths=total, model=model, config=config
    )


def cir_transition_sample(
    x: float, a_eff: float, b_eff: float, v_eff: float, dt: float, rng_state
) -> float:
    """One exact-in-law sample of the square-root diffusion transition
    dX = (a_eff - b_eff X) dt + v_eff sqrt(X) dB over dt, started at x.

    rng_state is either an integer seed or a (seed, path, step, process)
    tuple addressing one counter block; equal states give equal samples.
    """
    return float(
        cir_transition_sample_many(np.array([x]), a_eff, b_eff, v_eff, dt, rng_state)[0]
    )


def cir_transition_sample_many(x, a_eff, b_eff, v_eff, dt, rng_state, threads=1):
    """Vectorized cir_transition_sample; element p uses path index base+p."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("state x must be nonnegative")
    if isinstance(rng_state, tuple):
        seed, path0, step, process = rng_state
    else:
        seed, path0, step, process = int(rng_state), 0, 0, 0
    if not (a_eff >= 0.0 and b_eff > 0.0 and v_eff > 0.0 and dt > 0.0):
        raise DomainError(
            "need a_eff >= 0, b_eff > 0, v_eff > 0, dt > 0; got "
            f"a_eff={a_eff}, b_eff={b_eff}, v_eff={v_eff}, dt={dt}"
        )
    lam_half_factor, two_c, nu_half = _transition_constants(
        float(a_eff), float(b_eff), float(v_eff), float(dt)
    )
    if not (math.isfinite(nu_half) and math.isfinite(two_c)):
        raise DomainError(
            f"non-finite transition parameters nu={2.0 * nu_half}, c={two_c / 2.0}"
        )
    if path0 != 0:
        # counters address absolute path indices, so shift by simulating a
        # padded vector and slicing off the front
        full = np.zeros(path0 + x.shape[0], dtype=np.float64)
        full[path0:] = x
        out = _backend.active().transition_many(
            full, lam_half_factor, two_c, nu_half, int(seed), int(step),
            int(process), threads,
        )
        return out[path0:]
    return _backend.active().transition_many(
        x, lam_half_factor, two_c, nu_half, int(seed), int(step), int(process), threads
    )


def empirical_moments(ensemble: PathEnsemble) -> MomentCurves:
    """Sample mean and unbiased std per recorded time."""
    if ensemble.n_paths < 2:
        raise ValueError("need at least 2 paths for empirical moments")
    mean = ensemble.paths.mean(axis=0)
    std = ensemble.paths.std(axis=0, ddof=1)
    return MomentCurves(
        grid=ensemble.grid, mean=mean, std=std, source_tag="monte-carlo"
    )


def estimate_log_pdf(ensemble: PathEnsemble, times, n_bins: int) -> LogPdfTable:
    """Natural-log histogram densities at the requested recorded times, over
    bin edges shared across times: [0, max observed at those times]."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    times = np.asarray(times, dtype=np.float64)
    cols = []
    for t in times:
        hit = np.nonzero(np.abs(ensemble.grid - t) <= 1e-12)[0]
        if hit.size != 1:
            raise ValueError(f"time {t!r} is not a recorded grid point")
        cols.append(int(hit[0]))
    values = ensemble.paths[:, cols]
    top = float(values.max())
    if top <= 0.0:
        top = 1.0  # all-zero columns: one occupied bin at the origin
    edges = np.linspace(0.0, top, n_bins + 1)
    log_density = np.full((times.size, n_bins), np.nan)
    for i in range(times.size):
        hist, _ = np.histogram(values[:, i], bins=edges, density=True)
        occ = hist > 0.0
        log_density[i, occ] = np.log(hist[occ])
    return LogPdfTable(times=times, bin_edges=edges, log_density=log_density)


# ---------------------------------------------------------------------------
# Exports.  CSV: header row of recorded times, then one row per path.
# Binary dump: magic "CIRBENS1", uint64 n_paths, uint64 n_cols, float64
# grid[n_cols], float64 row-major paths, all little-endian.
# ---------------------------------------------------------------------------


def save_ensemble_csv(ensemble: PathEnsemble, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(format(t, ".17g") for t in ensemble.grid) + "\n")
        np.savetxt(fh, ensemble.paths, fmt="%.17g", delimiter=",")


def save_ensemble_bin(ensemble: PathEnsemble, path):
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<QQ", ensemble.paths.shape[0], ensemble.paths.shape[1]))
        fh.write(ensemble.grid.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(ensemble.paths, dtype="<f8").tobytes())


def load_ensemble_bin(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (grid, paths) from a binary dump."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BIN_MAGIC:
            raise ValueError(f"not an ensemble dump (magic {magic!r})")
        n_paths, n_cols = struct.unpack("<QQ", fh.read(16))
        grid = np.frombuffer(fh.read(8 * n_cols), dtype="<f8").copy()
        data = np.frombuffer(fh.read(8 * n_paths * n_cols), dtype="<f8")
        if data.size != n_paths * n_cols:
            raise ValueError("truncated ensemble dump")
        return grid, data.reshape(n_paths, n_cols).copy()

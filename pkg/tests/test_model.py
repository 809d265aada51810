"""Well-posedness check, volatility, and Feller diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cirbridge import (
    BridgeModel,
    check_well_posedness,
    classify_feller,
    closed_moment_curves,
    default_diagnostic_grid,
    feller_index,
    mean_closed,
    sigma_at,
)
from cirbridge.errors import DomainError


def test_model_validation():
    with pytest.raises(ValueError):
        BridgeModel(a=-0.1, r=1.0, mu=1.0, omega=0.0, alpha=0.5)
    with pytest.raises(ValueError):
        BridgeModel(a=0.1, r=0.0, mu=1.0, omega=0.0, alpha=0.5)
    with pytest.raises(ValueError):
        BridgeModel(a=0.1, r=1.0, mu=0.0, omega=0.0, alpha=0.5)
    with pytest.raises(ValueError):
        BridgeModel(a=0.1, r=1.0, mu=1.0, omega=0.0, alpha=0.5, horizon=0.0)


def test_sigma_at_zero_mean_is_floor(model_2325):
    assert sigma_at(0.0, model_2325, 0.0) == pytest.approx(model_2325.mu, rel=1e-15)


def test_sigma_at_mean_peak(model_2325):
    # peak located by an independent grid scan of the closed-form mean
    grid = np.linspace(1e-6, 1 - 1e-6, 200_001)
    peak = float(np.max(mean_closed(grid, model_2325)))
    assert peak == pytest.approx(0.015881, rel=1e-4)
    got = sigma_at(0.693, model_2325, peak)
    want = math.sqrt(model_2325.mu**2 + model_2325.omega * peak)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.6202, abs=5e-4)


def test_sigma_at_domain_error():
    model = BridgeModel(a=0.03, r=0.7, mu=1.0, omega=-200.0, alpha=0.5)
    with pytest.raises(DomainError):
        sigma_at(0.5, model, 0.01)


@given(
    mean_value=st.floats(min_value=0.0, max_value=0.015, allow_nan=False),
    omega=st.floats(min_value=-150.0, max_value=150.0, allow_nan=False),
)
def test_sigma_round_trip_identity(mean_value, omega):
    model = BridgeModel(a=0.03, r=0.7, mu=1.6, omega=omega, alpha=0.5)
    s2 = model.mu**2 + omega * mean_value
    if s2 <= 0.0:
        return
    sigma = sigma_at(0.2, model, mean_value)
    assert sigma * sigma - model.mu**2 == pytest.approx(omega * mean_value, rel=1e-12, abs=1e-13)


def test_well_posedness_table1(table1):
    for name, model in table1.items():
        report = check_well_posedness(model)
        assert report.alpha_ok, name
        assert report.sigma_positive, name
        assert report.overall, name
        assert report.alpha_bound == min(2.0, 1.0 + model.r)


def test_well_posedness_alpha_two_fails(model_2325):
    bad = BridgeModel(
        a=model_2325.a, r=model_2325.r, mu=model_2325.mu, omega=model_2325.omega,
        alpha=2.0,
    )
    report = check_well_posedness(bad)
    assert not report.alpha_ok
    assert not report.overall
    assert report.overall == (report.alpha_ok and report.sigma_positive)


def test_well_posedness_zero_source_trivial():
    model = BridgeModel(a=0.0, r=0.8, mu=1.2, omega=-50.0, alpha=0.7)
    report = check_well_posedness(model)
    assert report.overall
    assert report.sigma_margin == pytest.approx(model.mu**2, rel=1e-15)


@given(alpha_hi=st.floats(-1.0, 1.9), step=st.floats(0.01, 2.0))
def test_alpha_bound_is_monotone(alpha_hi, step):
    mk = lambda alpha: BridgeModel(a=0.03, r=0.9, mu=1.0, omega=0.0, alpha=alpha)
    if check_well_posedness(mk(alpha_hi)).alpha_ok:
        assert check_well_posedness(mk(alpha_hi - step)).alpha_ok


def test_feller_index_at_start(model_2325):
    got = feller_index(0.0, model_2325, 0.0)
    # independent route: classical square-root-diffusion ratio v^2/(2a) - 1
    # with v^2 the full diffusion coefficient at this instant
    v2 = (model_2325.mu**2) * model_2325.r / (1.0 - 0.0) ** model_2325.alpha
    assert got == pytest.approx(v2 / (2 * model_2325.a) - 1.0, rel=1e-12)
    assert got == pytest.approx(24.81, abs=2e-2)


def test_feller_index_scaled_model_negative_at_peak(model_2325):
    scaled = model_2325.scale_sigma(0.2)
    grid = np.linspace(1e-6, 1 - 1e-6, 200_001)
    vals = mean_closed(grid, model_2325)
    k = int(np.argmax(vals))
    got = feller_index(float(grid[k]), scaled, float(vals[k]))
    assert got == pytest.approx(-0.72, abs=1e-2)
    assert got < 0.0


def test_feller_index_exact_boundary():
    # sigma^2 * r = 2a at alpha = 0 sits exactly on the boundary
    model = BridgeModel(a=0.35, r=0.7, mu=1.0, omega=0.0, alpha=0.0)
    assert feller_index(0.37, model, 0.0) == 0.0


def test_feller_index_domain_errors(model_2325):
    zero_source = BridgeModel(a=0.0, r=0.7, mu=1.0, omega=0.0, alpha=0.5)
    with pytest.raises(DomainError):
        feller_index(0.2, zero_source, 0.0)
    with pytest.raises(DomainError):
        feller_index(1.0, model_2325, 0.0)


@given(
    c=st.floats(min_value=0.05, max_value=4.0),
    t=st.floats(min_value=0.0, max_value=0.99),
)
def test_feller_sigma_scaling_law(c, t):
    model = BridgeModel(a=0.03, r=0.9, mu=1.5, omega=-100.0, alpha=0.4)
    mean_value = 0.012
    base = feller_index(t, model, mean_value)
    scaled = feller_index(t, model.scale_sigma(c), mean_value)
    assert scaled + 1.0 == pytest.approx(c * c * (base + 1.0), rel=1e-12)


@given(
    a1=st.floats(min_value=1e-3, max_value=10.0),
    factor=st.floats(min_value=1.01, max_value=50.0),
    t=st.floats(min_value=0.0, max_value=0.99),
)
def test_feller_strictly_decreasing_in_source(a1, factor, t):
    mk = lambda a: BridgeModel(a=a, r=0.9, mu=1.5, omega=0.0, alpha=0.4)
    assert feller_index(t, mk(a1 * factor), 0.01) < feller_index(t, mk(a1), 0.01)


@given(
    t1=st.floats(min_value=0.01, max_value=0.97),
    t2=st.floats(min_value=0.01, max_value=0.97),
)
def test_feller_increasing_in_singularity_factor(t1, t2):
    # at fixed mean value the index is monotone in (1-t)^(-alpha)
    model = BridgeModel(a=0.03, r=0.9, mu=1.5, omega=0.0, alpha=0.7)
    f1 = (1.0 - t1) ** -model.alpha
    f2 = (1.0 - t2) ** -model.alpha
    if f1 == f2:
        return
    lo, hi = (t1, t2) if f1 < f2 else (t2, t1)
    assert feller_index(lo, model, 0.01) < feller_index(hi, model, 0.01)


def test_classify_feller_table1_all_violated(table1):
    for name, model in table1.items():
        profile = classify_feller(model)
        assert profile.violated_everywhere, name
        assert profile.satisfied_intervals == []
        assert np.all(profile.values >= 0.0)


def test_classify_feller_scaled_model_has_satisfied_interval(model_2325):
    profile = classify_feller(model_2325.scale_sigma(0.2))
    assert not profile.violated_everywhere
    assert len(profile.satisfied_intervals) >= 1
    lo, hi = profile.satisfied_intervals[0]
    assert 0.0 < lo < hi < 1.0
    # the interval brackets the mean peak where the volatility dip is deepest
    assert lo < 0.693 < hi


def test_classify_feller_large_source_satisfied_everywhere(model_2325):
    # same coefficients, hugely stronger source, evaluated along the original
    # model's mean curve (the index is a pointwise diagnostic)
    big = BridgeModel(
        a=1e3, r=model_2325.r, mu=model_2325.mu, omega=model_2325.omega,
        alpha=model_2325.alpha,
    )
    curve = closed_moment_curves(model_2325, default_diagnostic_grid(), with_std=False)
    profile = classify_feller(big, curve)
    assert not profile.violated_everywhere
    assert len(profile.satisfied_intervals) == 1
    lo, hi = profile.satisfied_intervals[0]
    assert lo == profile.grid[0] and hi == profile.grid[-1]
    assert np.all(profile.values > -1.0)


def test_classify_feller_rejects_endpoint_grids(model_2325):
    curve = closed_moment_curves(
        model_2325, np.linspace(0.0, 0.5, 100), with_std=False
    )
    with pytest.raises(DomainError):
        classify_feller(model_2325, curve)


def test_scale_sigma_validation(model_2325):
    with pytest.raises(ValueError):
        model_2325.scale_sigma(0.0)
    scaled = model_2325.scale_sigma(0.5)
    assert scaled.mu == pytest.approx(0.5 * model_2325.mu)
    assert scaled.omega == pytest.approx(0.25 * model_2325.omega)
